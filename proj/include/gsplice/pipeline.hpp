#pragma once

#include "gsplice/config.hpp"
#include "gsplice/scene_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gsplice {

/// User placement edits, checkpointed to <scene>/placement.json.
struct PlacementState {
  Posed pose;
  double scale = 1.0;
  std::vector<Eigen::Vector2d> anchors;  // frame-0 pixels
  bool locked = false;
};

nlohmann::json placement_to_json(const PlacementState& state);
PlacementState placement_from_json(const nlohmann::json& j);
std::optional<PlacementState> load_placement_state(const fs::path& path);
void save_placement_state(const fs::path& path, const PlacementState& state);

/// Locked placement.json when present, otherwise the config placement.
PlacementState effective_placement(const Scene& scene);

/// Track ids used for tracking: the frame-0 tracks nearest (within 2 px) to
/// each placement anchor, or every track when no anchors were chosen.
std::vector<std::size_t> select_tracks(const Scene& scene, const PlacementState& placement);

/// Splat model with the placement scale applied.
SplatModel placed_model(const Scene& scene);

/// poses.json under out_dir when present, otherwise the placement pose for every frame.
std::vector<Posed> object_poses(const Scene& scene, const fs::path& out_dir);

/// Per-pixel camera-frame normals of the splat render, alpha-weighted; each
/// splat's normal is its shortest axis turned toward the camera.
NormalMap render_normals(const SplatModel& model, const Camera& camera, const Posed& pose);

/// Mean over consecutive frame pairs of the mask-weighted mean absolute difference.
double flicker_metric(const std::vector<Image3d>& frames, const Planed& mask);
double flicker_metric(const std::vector<Image3d>& frames, const std::vector<Planed>& masks);

enum class PipelineStage { Track, Occlusion, Preview, Enhance, Smooth, Final };
inline constexpr PipelineStage kAllStages[] = {PipelineStage::Track,   PipelineStage::Occlusion,
                                               PipelineStage::Preview, PipelineStage::Enhance,
                                               PipelineStage::Smooth,  PipelineStage::Final};
std::string_view to_string(PipelineStage stage);
PipelineStage pipeline_stage_from_string(std::string_view name);
/// Comma-separated list; empty selects every stage.
std::set<PipelineStage> parse_stages(const std::string& list);

enum class StageStatus { Pending, Done, Failed, Blocked };
std::string_view to_string(StageStatus status);

struct StageRecord {
  PipelineStage stage;
  StageStatus status = StageStatus::Pending;
  std::string error;
  double seconds = 0;
};

struct RunOptions {
  std::set<PipelineStage> stages;  // empty = all
  std::optional<fs::path> config_path;
  std::optional<std::string> enhancer;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out_dir;  // default <scene>/out
  bool verbose = false;
};

struct PipelineRun {
  fs::path scene_dir;
  fs::path out_dir;
  std::vector<StageRecord> stages;
  nlohmann::json metrics;
  std::vector<std::string> warnings;

  bool ok() const;
};

/// Executes the requested stages in dependency order. Every stage reads its
/// inputs from out_dir, so split runs and full runs produce the same bytes.
/// Errors are recorded per stage; later stages are blocked.
PipelineRun run_pipeline(const fs::path& scene_dir, const RunOptions& options = {});

/// Pipeline run on an already loaded scene.
PipelineRun run_pipeline(const Scene& scene, const RunOptions& options = {});

/// Exclusive per-directory lock held for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

}  // namespace gsplice
