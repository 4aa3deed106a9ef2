#pragma once

#include "gsplice/config.hpp"
#include "gsplice/image.hpp"
#include "gsplice/intrinsics.hpp"
#include "gsplice/rng.hpp"
#include "gsplice/scene_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace gsplice {

/// max(0, N . L)^alpha per pixel, 0 where the normal is invalid.
Planed synth_shading(const NormalMap& normals, const Eigen::Vector3d& light, double alpha);

/// Numerically stable softmax(z / tau).
std::vector<double> softmax(std::span<const double> z, double tau);
/// z_i ~ U[0, 1], w = softmax(z / tau).
std::vector<double> sample_blend_weights(int count, double tau, CounterRng& rng, std::vector<double>* z_out = nullptr);

/// beta * gray + (1 - beta) * sum_i w_i synth_i
Planed blend_synthetic(const Planed& gray, std::span<const Planed> synth, std::span<const double> weights,
                       double beta);

/// (S - m) * gamma + m with m the midpoint of the extrema.
Planed scale_shading(const Planed& gray, double gamma);
/// Same, with extrema taken over `region` only.
Planed scale_shading(const Planed& gray, double gamma, const BinaryMask& region);

/// max - S + min
Planed flip_shading(const Planed& gray);
Planed flip_shading(const Planed& gray, const BinaryMask& region);

/// Pixels within Euclidean distance r of the mask take the blurred value.
Planed blur_near_mask(const Planed& gray, const BinaryMask& mask, double radius, double sigma);

struct ShadowPatch {
  Eigen::Vector2d center;  // (u, v) pixels
  double amplitude = 0;
  double sigma = 1;
};

Planed gaussian_patch(Index rows, Index cols, const ShadowPatch& patch);
/// S + sum_k G_k, clamped at 0.
Planed add_shadow_patches(const Planed& gray, std::span<const ShadowPatch> patches);
/// Draws K in patches_range, centers uniformly among `region` pixels,
/// amplitudes and sigmas from their ranges.
std::vector<ShadowPatch> sample_shadow_patches(const BinaryMask& region, const AugmentationParams& params,
                                               CounterRng& rng);

/// Uniform direction on the hemisphere facing the camera (z <= 0).
Eigen::Vector3d sample_light_direction(CounterRng& rng);

enum class AugmentStage { Relight, Shadow };
std::string_view to_string(AugmentStage stage);
AugmentStage augment_stage_from_string(std::string_view name);

struct TrainingPair {
  std::vector<Image3d> inputs;  // network conditions c1, c2, c3
  Planed target;
  nlohmann::json meta;
};

/// Relight: inputs (M * degraded, M_bg * gray, N), target M * gray.
/// Shadow: inputs (M * gray, M_bg * gray, M_surr * degraded), target gray.
TrainingPair make_training_pair(const IntrinsicFrame& frame, const RegionMasks& masks, const NormalMap& normals,
                                const AugmentationParams& params, AugmentStage stage, CounterRng& rng);

/// Writes <out_dir>/pairs/<stage>/<id>/{input_0..2.pfm, target.pfm, meta.json}.
/// Pair i uses frame i mod T and stream CounterRng::derive(seed, i).
std::vector<fs::path> emit_dataset(const Scene& scene, AugmentStage stage, int count, std::uint64_t seed,
                                   const fs::path& out_dir);

}  // namespace gsplice
