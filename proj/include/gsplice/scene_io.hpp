#pragma once

#include "gsplice/camera.hpp"
#include "gsplice/config.hpp"
#include "gsplice/image.hpp"
#include "gsplice/splat_renderer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gsplice {

namespace fs = std::filesystem;

enum class ColorSpace { sRGB, LinearRGB };

struct Frame {
  Image3d pixels;
  ColorSpace color_space = ColorSpace::sRGB;
  int index = 0;
};

struct DepthMap {
  Planed depth;
  BinaryMask valid;

  static DepthMap from_depth(Planed d) {
    BinaryMask v = d.isFinite() && (d > 0.0);
    return {std::move(d), std::move(v)};
  }
};

struct NormalMap {
  Image3d normals;
  BinaryMask valid;

  Eigen::Vector3d at(Index row, Index col) const { return normals.pixel(row, col); }
};

struct TrackSet {
  std::vector<std::vector<Eigen::Vector2d>> points;  // [frame][track]
  std::vector<std::vector<bool>> visible;            // [frame][track]

  std::size_t frames() const { return points.size(); }
  std::size_t tracks() const { return points.empty() ? 0 : points.front().size(); }
};

struct IntrinsicLayers {
  Image3d albedo;
  Image3d shading;
  Image3d residual;
};

struct Scene {
  fs::path dir;
  Camera camera;
  std::vector<Frame> frames;
  std::vector<DepthMap> depth;
  TrackSet tracks;
  SplatModel splats;
  SceneConfig config;
  std::optional<std::vector<NormalMap>> normals;         // absent when normals/ is missing
  std::optional<std::vector<IntrinsicLayers>> layers;    // absent when albedo/shading/residual are missing

  std::size_t frame_count() const { return frames.size(); }
};

/// "%05d.<ext>", or just the zero-padded index when ext is empty.
std::string frame_name(int index, const char* ext);

/// MissingFile when absent, ParseError on malformed JSON.
nlohmann::json read_json(const fs::path& path);
/// Creates parent directories; IoError on failure.
void write_text(const fs::path& path, const std::string& text);

// Raw codecs. PFM is little-endian, bottom-to-top on disk; PNG is 8-bit RGB.
std::string encode_pfm(const Planed& plane);
std::string encode_pfm(const Image3d& image);
void write_pfm(const fs::path& path, const Planed& plane);
void write_pfm(const fs::path& path, const Image3d& image);
/// Reads 1- or 3-channel PFM; a 1-channel file is replicated into all channels.
Image3d read_pfm(const fs::path& path, int* channels = nullptr);
Planed read_pfm_plane(const fs::path& path);

void write_png(const fs::path& path, const Image3d& image);
void write_png(const fs::path& path, const Planed& gray);
std::vector<unsigned char> encode_png(const Image3d& image);
Image3d read_png(const fs::path& path);
/// Round to the nearest 8-bit level, as a PNG round trip would.
Image3d quantize8(const Image3d& image);

SplatModel load_splats(const fs::path& path);
void save_splats(const fs::path& path, const SplatModel& model);

Camera load_intrinsics(const fs::path& path);
void save_intrinsics(const fs::path& path, const Camera& camera);
TrackSet load_tracks(const fs::path& path);
void save_tracks(const fs::path& path, const TrackSet& tracks);

Scene load_scene(const fs::path& dir);

enum class Stage { Preview, Occlusion, Refined, Rerender, Interp, Final };
std::string_view stage_dir(Stage stage);

struct PoseRecord {
  int t = 0;
  Posed pose;
  double rms_px = 0;
};

/// Writes <out>/<stage>/%05d.png; returns the paths written.
std::vector<fs::path> save_frames(const fs::path& out_dir, Stage stage, const std::vector<Image3d>& frames);
std::vector<Image3d> load_frames(const fs::path& out_dir, Stage stage, std::size_t count);
void save_poses(const fs::path& path, const std::vector<PoseRecord>& poses);
std::vector<PoseRecord> load_poses(const fs::path& path);
/// Soft masks as PFM, binary masks as PNG x 255, both under <out>/occlusion/.
void save_occlusion(const fs::path& out_dir, int index, const Planed& soft, const BinaryMask& binary);
Planed load_occlusion_soft(const fs::path& out_dir, int index);

}  // namespace gsplice
