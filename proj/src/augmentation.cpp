#include "gsplice/augmentation.hpp"
#include "gsplice/error.hpp"
#include "gsplice/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace gsplice {

Planed synth_shading(const NormalMap& normals, const Eigen::Vector3d& light, double alpha) {
  const Planed dot = normals.normals[0] * light.x() + normals.normals[1] * light.y() + normals.normals[2] * light.z();
  return normals.valid.select(dot.max(0.0).pow(alpha), 0.0);
}

std::vector<double> softmax(std::span<const double> z, double tau) {
  if (z.empty()) throw Error(ErrorKind::ValueOutOfRange, "softmax", "need at least one logit");
  if (!(tau > 0)) throw Error(ErrorKind::ValueOutOfRange, "tau", "must be > 0");
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> w(z.size());
  double sum = 0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (w[i] = std::exp((z[i] - zmax) / tau));
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> sample_blend_weights(int count, double tau, CounterRng& rng, std::vector<double>* z_out) {
  if (count < 1) throw Error(ErrorKind::ValueOutOfRange, "lights", "must be >= 1");
  std::vector<double> z(static_cast<std::size_t>(count));
  for (double& v : z) v = rng.uniform();
  if (z_out) *z_out = z;
  return softmax(z, tau);
}

Planed blend_synthetic(const Planed& gray, std::span<const Planed> synth, std::span<const double> weights,
                       double beta) {
  if (synth.size() != weights.size())
    throw Error(ErrorKind::DimensionMismatch, "blend_synthetic", "one weight per synthetic map");
  Planed mix = Planed::Zero(gray.rows(), gray.cols());
  for (std::size_t i = 0; i < synth.size(); ++i) mix += weights[i] * synth[i];
  return beta * gray + (1.0 - beta) * mix;
}

namespace {

std::pair<double, double> extrema(const Planed& p, const BinaryMask* region) {
  if (!region) return {p.minCoeff(), p.maxCoeff()};
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index i = 0; i < p.size(); ++i)
    if (region->data()[i]) {
      lo = std::min(lo, p.data()[i]);
      hi = std::max(hi, p.data()[i]);
    }
  if (hi < lo) return {p.minCoeff(), p.maxCoeff()};
  return {lo, hi};
}

Planed scale_impl(const Planed& gray, double gamma, const BinaryMask* region) {
  if (gamma == 1.0) return gray;
  const auto [lo, hi] = extrema(gray, region);
  const double m = 0.5 * (lo + hi);
  return (gray - m) * gamma + m;
}

Planed flip_impl(const Planed& gray, const BinaryMask* region) {
  const auto [lo, hi] = extrema(gray, region);
  return hi - gray + lo;
}

}  // namespace

Planed scale_shading(const Planed& gray, double gamma) { return scale_impl(gray, gamma, nullptr); }
Planed scale_shading(const Planed& gray, double gamma, const BinaryMask& region) {
  return scale_impl(gray, gamma, &region);
}
Planed flip_shading(const Planed& gray) { return flip_impl(gray, nullptr); }
Planed flip_shading(const Planed& gray, const BinaryMask& region) { return flip_impl(gray, &region); }

Planed blur_near_mask(const Planed& gray, const BinaryMask& mask, double radius, double sigma) {
  if (radius < 0) throw Error(ErrorKind::ValueOutOfRange, "blur_radius", "must be >= 0");
  if (!(sigma > 0)) throw Error(ErrorKind::ValueOutOfRange, "blur_sigma", "must be > 0");
  const Planed dist = distance_to_mask(mask);
  const Planed blurred = gaussian_blur(gray, sigma);
  return (dist <= radius).select(blurred, gray);
}

Planed gaussian_patch(Index rows, Index cols, const ShadowPatch& patch) {
  Planed g(rows, cols);
  const double inv = 1.0 / (2.0 * patch.sigma * patch.sigma);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      const double du = static_cast<double>(c) - patch.center.x();
      const double dv = static_cast<double>(r) - patch.center.y();
      g(r, c) = patch.amplitude * std::exp(-(du * du + dv * dv) * inv);
    }
  return g;
}

Planed add_shadow_patches(const Planed& gray, std::span<const ShadowPatch> patches) {
  if (patches.empty()) return gray;
  Planed out = gray;
  for (const ShadowPatch& p : patches) out += gaussian_patch(gray.rows(), gray.cols(), p);
  return out.max(0.0);
}

std::vector<ShadowPatch> sample_shadow_patches(const BinaryMask& region, const AugmentationParams& params,
                                               CounterRng& rng) {
  std::vector<Index> candidates;
  for (Index i = 0; i < region.size(); ++i)
    if (region.data()[i]) candidates.push_back(i);
  const int k = rng.uniform_int(params.patches_range[0], params.patches_range[1]);
  std::vector<ShadowPatch> out;
  if (candidates.empty()) return out;
  for (int i = 0; i < k; ++i) {
    const Index flat = candidates[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
    ShadowPatch p;
    p.center = {static_cast<double>(flat % region.cols()), static_cast<double>(flat / region.cols())};
    p.amplitude = rng.uniform(params.amp_range[0], params.amp_range[1]);
    p.sigma = rng.uniform(params.sigma_range[0], params.sigma_range[1]);
    out.push_back(p);
  }
  return out;
}

Eigen::Vector3d sample_light_direction(CounterRng& rng) {
  const double z = -rng.uniform();
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {rho * std::cos(phi), rho * std::sin(phi), z};
}

std::string_view to_string(AugmentStage stage) { return stage == AugmentStage::Relight ? "relight" : "shadow"; }

AugmentStage augment_stage_from_string(std::string_view name) {
  if (name == "relight") return AugmentStage::Relight;
  if (name == "shadow") return AugmentStage::Shadow;
  throw Error(ErrorKind::ConfigError, "stage", "expected relight or shadow, got '" + std::string(name) + "'");
}

TrainingPair make_training_pair(const IntrinsicFrame& frame, const RegionMasks& masks, const NormalMap& normals,
                                const AugmentationParams& params, AugmentStage stage, CounterRng& rng) {
  const Planed gray = luminance(frame.shading);
  const BinaryMask inside = masks.bracelet > 0.5;
  TrainingPair pair;
  pair.meta = {{"stage", to_string(stage)},
               {"frame", frame.index},
               {"rng_key", rng.key()},
               {"rng_counter", rng.counter()},
               {"tau", params.tau}};

  if (stage == AugmentStage::Relight) {
    std::vector<Planed> synth;
    nlohmann::json lights = nlohmann::json::array();
    for (int i = 0; i < params.lights; ++i) {
      const Eigen::Vector3d l = sample_light_direction(rng);
      const double alpha = rng.uniform(params.alpha_range[0], params.alpha_range[1]);
      synth.push_back(synth_shading(normals, l, alpha));
      lights.push_back({{"L", {l.x(), l.y(), l.z()}}, {"alpha", alpha}});
    }
    std::vector<double> z;
    const std::vector<double> w = sample_blend_weights(params.lights, params.tau, rng, &z);
    const double beta = rng.uniform(params.beta_range[0], params.beta_range[1]);
    const double gamma = rng.uniform(params.gamma_range[0], params.gamma_range[1]);
    const bool flip = rng.bernoulli(params.flip_prob);

    Planed degraded = blend_synthetic(gray, synth, w, beta);
    degraded = scale_shading(degraded, gamma, inside);
    if (flip) degraded = flip_shading(degraded, inside);
    const Planed m_bracelet = masks.bracelet;
    degraded = (m_bracelet * degraded).max(0.0);

    pair.inputs = {Image3d(degraded), Image3d(Planed(masks.background * gray)), normals.normals};
    pair.target = masks.bracelet * gray;
    pair.meta["lights"] = lights;
    pair.meta["z"] = z;
    pair.meta["weights"] = w;
    pair.meta["beta"] = beta;
    pair.meta["gamma"] = gamma;
    pair.meta["flip"] = flip;
  } else {
    const Planed blurred = blur_near_mask(gray, inside, params.blur_radius, params.blur_sigma);
    const std::vector<ShadowPatch> patches = sample_shadow_patches(masks.background < 0.5, params, rng);
    const Planed perturbed = add_shadow_patches(blurred, patches);

    pair.inputs = {Image3d(Planed(masks.bracelet * gray)), Image3d(Planed(masks.background * gray)),
                   Image3d(Planed(masks.surrounding * perturbed))};
    pair.target = gray;
    nlohmann::json pj = nlohmann::json::array();
    for (const ShadowPatch& p : patches)
      pj.push_back({{"c", {p.center.x(), p.center.y()}}, {"A", p.amplitude}, {"sigma", p.sigma}});
    pair.meta["K"] = patches.size();
    pair.meta["patches"] = pj;
    pair.meta["blur_radius"] = params.blur_radius;
    pair.meta["blur_sigma"] = params.blur_sigma;
  }
  return pair;
}

std::vector<fs::path> emit_dataset(const Scene& scene, AugmentStage stage, int count, std::uint64_t seed,
                                   const fs::path& out_dir) {
  if (count < 0) throw Error(ErrorKind::ValueOutOfRange, "count", "must be >= 0");
  if (!scene.layers) throw Error(ErrorKind::MissingFile, "shading/00000.pfm", "intrinsic layers are required");
  if (!scene.normals) throw Error(ErrorKind::MissingFile, "normals/00000.pfm", "normals are required");
  const std::vector<Posed> poses = object_poses(scene, out_dir);
  const SplatModel model = placed_model(scene);
  const AugmentationParams& params = scene.config.augmentation;

  std::vector<fs::path> written;
  for (int id = 0; id < count; ++id) {
    const auto t = static_cast<std::size_t>(id) % scene.frame_count();
    const IntrinsicLayers& layers = (*scene.layers)[t];
    IntrinsicFrame frame{srgb_to_linear(scene.frames[t].pixels), layers.albedo, layers.shading, layers.residual,
                         static_cast<int>(t)};
    const Planed alpha = render(model, scene.camera, poses[t]).alpha;
    const int expand = scene.config.expand_px >= 0 ? scene.config.expand_px : default_expand_px(alpha);
    const RegionMasks masks = partition_regions(alpha, expand);

    CounterRng rng(CounterRng::derive(seed, static_cast<std::uint64_t>(id)));
    TrainingPair pair = make_training_pair(frame, masks, (*scene.normals)[t], params, stage, rng);
    pair.meta["seed"] = seed;
    pair.meta["id"] = id;

    const fs::path dir = out_dir / "pairs" / std::string(to_string(stage)) / frame_name(id, "");
    fs::create_directories(dir);
    for (std::size_t k = 0; k < pair.inputs.size(); ++k)
      write_pfm(dir / ("input_" + std::to_string(k) + ".pfm"), pair.inputs[k]);
    write_pfm(dir / "target.pfm", pair.target);
    std::ofstream(dir / "meta.json") << pair.meta.dump(2) << "\n";
    written.push_back(dir);
  }
  return written;
}

}  // namespace gsplice
