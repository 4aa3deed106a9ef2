#include "gsplice/pipeline.hpp"
#include "gsplice/synthetic.hpp"

#include "support.hpp"

#include <cstdio>
#include <map>

using namespace gsplice;
using testing_support::TempDir;

namespace {

SyntheticOptions small_options() {
  SyntheticOptions o;
  o.width = 64;
  o.height = 64;
  o.frames = 4;
  return o;
}

/// Relative path -> bytes for every regular file under `root`.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing_support::read_file(e.path());
  return out;
}

double max_abs(const Image3d& a, const Image3d& b) {
  double m = 0;
  for (int k = 0; k < 3; ++k) m = std::max(m, (a[k] - b[k]).abs().maxCoeff());
  return m;
}

const StageRecord& record(const PipelineRun& run, PipelineStage stage) {
  for (const StageRecord& r : run.stages)
    if (r.stage == stage) return r;
  throw std::runtime_error("stage not run");
}

}  // namespace

TEST(Stages, ParseList) {
  EXPECT_TRUE(parse_stages("").empty());
  EXPECT_EQ(parse_stages("track,smooth"), (std::set<PipelineStage>{PipelineStage::Track, PipelineStage::Smooth}));
  EXPECT_EQ(parse_stages("final,,track"), (std::set<PipelineStage>{PipelineStage::Track, PipelineStage::Final}));
  EXPECT_ERROR_KIND(parse_stages("track,blend"), ErrorKind::ConfigError);
  for (const PipelineStage s : kAllStages) EXPECT_EQ(pipeline_stage_from_string(to_string(s)), s);
}

TEST(FlickerMetric, IdenticalFramesAreZero) {
  CounterRng rng(1);
  const Image3d f = testing_support::random_image(8, 8, rng);
  EXPECT_EQ(flicker_metric({f, f, f}, Planed::Ones(8, 8)), 0.0);
}

TEST(FlickerMetric, AlternatingBlackWhiteIsOne) {
  const Image3d black(6, 6, 0.0), white(6, 6, 1.0);
  Planed mask = Planed::Zero(6, 6);
  mask.block(1, 1, 3, 3) = 1.0;
  EXPECT_DOUBLE_EQ(flicker_metric({black, white, black, white}, mask), 1.0);
}

TEST(FlickerMetric, MatchesDirectLoop) {
  CounterRng rng(2);
  std::vector<Image3d> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(testing_support::random_image(7, 9, rng));
  const Planed mask = testing_support::random_plane(7, 9, rng);
  double total = 0;
  for (int t = 0; t < 4; ++t) {
    double num = 0, den = 0;
    for (Index r = 0; r < 7; ++r)
      for (Index c = 0; c < 9; ++c) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += std::abs(frames[t][k](r, c) - frames[t + 1][k](r, c));
        num += mask(r, c) * d / 3.0;
        den += mask(r, c);
      }
    total += num / den;
  }
  EXPECT_NEAR(flicker_metric(frames, mask), total / 4, 1e-9);
  EXPECT_ERROR_KIND(flicker_metric({frames[0]}, mask), ErrorKind::ValueOutOfRange);
}

TEST(Placement, JsonRoundTripAndLockedOverride) {
  TempDir tmp;
  SyntheticScene syn = write_synthetic_scene(tmp.path(), small_options());
  PlacementState p;
  p.pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitY()));
  p.pose.translation = {0.01, -0.02, 0.45};
  p.scale = 1.25;
  p.anchors = {{10, 12}, {20.5, 30}};
  const PlacementState back = placement_from_json(placement_to_json(p));
  EXPECT_LT(back.pose.rotation.angularDistance(p.pose.rotation), 1e-15);
  EXPECT_EQ(back.pose.translation, p.pose.translation);
  EXPECT_EQ(back.scale, 1.25);
  ASSERT_EQ(back.anchors.size(), 2u);
  EXPECT_EQ(back.anchors[1], Eigen::Vector2d(20.5, 30));

  // An unlocked checkpoint does not override the config placement.
  save_placement_state(tmp / "placement.json", p);
  EXPECT_EQ(effective_placement(syn.scene).scale, syn.scene.config.placement.scale);
  p.locked = true;
  save_placement_state(tmp / "placement.json", p);
  EXPECT_EQ(effective_placement(syn.scene).scale, 1.25);

  std::ofstream(tmp / "placement.json") << "{\"pose\": ";
  EXPECT_ERROR_KIND(effective_placement(syn.scene), ErrorKind::ParseError);
}

TEST(DirectoryLockTest, SecondHolderIsRejected) {
  TempDir tmp;
  {
    DirectoryLock a(tmp.path());
    EXPECT_ERROR_KIND(DirectoryLock b(tmp.path()), ErrorKind::IoError);
  }
  EXPECT_FALSE(fs::exists(tmp / ".lock"));
  std::ofstream(tmp / ".lock") << "0\n";
  EXPECT_NO_THROW(DirectoryLock c(tmp.path()));
}

TEST(RunPipeline, TrackStageOnlyWritesPoses) {
  TempDir tmp;
  write_synthetic_scene(tmp / "scene", small_options());
  RunOptions opts;
  opts.stages = {PipelineStage::Track};
  const PipelineRun run = run_pipeline(tmp / "scene", opts);
  ASSERT_TRUE(run.ok());
  ASSERT_EQ(run.stages.size(), 1u);
  std::set<std::string> entries;
  for (const auto& e : fs::directory_iterator(run.out_dir)) entries.insert(e.path().filename().string());
  EXPECT_EQ(entries, (std::set<std::string>{"metrics.json", "poses.json"}));
  EXPECT_EQ(load_poses(run.out_dir / "poses.json").size(), 4u);
  EXPECT_EQ(run.metrics["stages"]["track"]["status"], "done");
}

TEST(RunPipeline, MissingInputsFailAndBlockDependents) {
  TempDir tmp;
  write_synthetic_scene(tmp / "scene", small_options());
  RunOptions opts;
  opts.stages = {PipelineStage::Preview, PipelineStage::Enhance, PipelineStage::Final};
  const PipelineRun run = run_pipeline(tmp / "scene", opts);
  EXPECT_FALSE(run.ok());
  EXPECT_EQ(record(run, PipelineStage::Preview).status, StageStatus::Failed);
  EXPECT_NE(record(run, PipelineStage::Preview).error.find("poses.json"), std::string::npos);
  EXPECT_EQ(record(run, PipelineStage::Enhance).status, StageStatus::Blocked);
  EXPECT_EQ(record(run, PipelineStage::Final).status, StageStatus::Blocked);
}

TEST(RunPipeline, FailingExternalEnhancerIsRecorded) {
  TempDir tmp;
  write_synthetic_scene(tmp / "scene", small_options());
  const fs::path script = tmp / "fail.sh";
  std::ofstream(script) << "#!/bin/sh\nexit 2\n";
  RunOptions opts;
  opts.enhancer = "external:sh " + script.string();
  const PipelineRun run = run_pipeline(tmp / "scene", opts);
  EXPECT_EQ(record(run, PipelineStage::Preview).status, StageStatus::Done);
  EXPECT_EQ(record(run, PipelineStage::Enhance).status, StageStatus::Failed);
  EXPECT_EQ(record(run, PipelineStage::Smooth).status, StageStatus::Blocked);
  EXPECT_EQ(run.metrics["stages"]["enhance"]["status"], "failed");
}

class IdentityPath : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new TempDir;
    syn_ = new SyntheticScene(write_synthetic_scene(*tmp_ / "scene", small_options()));
    syn_->scene.config.keyframe_stride = 1;
    RunOptions opts;
    opts.out_dir = *tmp_ / "a";
    run_ = new PipelineRun(run_pipeline(syn_->scene, opts));
  }
  static void TearDownTestSuite() {
    delete run_;
    delete syn_;
    delete tmp_;
  }
  static TempDir* tmp_;
  static SyntheticScene* syn_;
  static PipelineRun* run_;
};
TempDir* IdentityPath::tmp_ = nullptr;
SyntheticScene* IdentityPath::syn_ = nullptr;
PipelineRun* IdentityPath::run_ = nullptr;

TEST_F(IdentityPath, FullRunSucceeds) {
  ASSERT_TRUE(run_->ok());
  for (const StageRecord& r : run_->stages) EXPECT_EQ(r.status, StageStatus::Done) << to_string(r.stage) << r.error;
  EXPECT_EQ(run_->metrics["enhancer"], "identity");
  EXPECT_EQ(run_->metrics["pnp_rms_px"].size(), 4u);
}

TEST_F(IdentityPath, FinalMatchesPreview) {
  const std::vector<Image3d> preview = load_frames(run_->out_dir, Stage::Preview, 4);
  const std::vector<Image3d> final_frames = load_frames(run_->out_dir, Stage::Final, 4);
  for (int t = 0; t < 4; ++t) EXPECT_LE(max_abs(preview[t], final_frames[t]), 1.0 / 255 + 1e-12) << t;
}

TEST_F(IdentityPath, BackgroundMatchesInput) {
  const std::vector<Image3d> final_frames = load_frames(run_->out_dir, Stage::Final, 4);
  for (int t = 0; t < 4; ++t) {
    const RenderOutput r = render(syn_->scene.splats, syn_->scene.camera, load_poses(run_->out_dir / "poses.json")[t].pose);
    const Image3d& input = syn_->scene.frames[t].pixels;
    double worst = 0;
    for (Index i = 0; i < r.alpha.size(); ++i)
      if (r.alpha.data()[i] == 0)
        for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(final_frames[t][k].data()[i] - input[k].data()[i]));
    EXPECT_LE(worst, 1.0 / 255 + 1e-12) << t;
  }
}

TEST_F(IdentityPath, RerunIsByteIdentical) {
  const auto before = snapshot(run_->out_dir);
  RunOptions opts;
  opts.out_dir = run_->out_dir;
  ASSERT_TRUE(run_pipeline(syn_->scene, opts).ok());
  EXPECT_EQ(snapshot(run_->out_dir), before);
}

TEST_F(IdentityPath, SplitRunMatchesFullRun) {
  RunOptions opts;
  opts.out_dir = *tmp_ / "b";
  opts.stages = {PipelineStage::Track, PipelineStage::Occlusion};
  ASSERT_TRUE(run_pipeline(syn_->scene, opts).ok());
  opts.stages = {PipelineStage::Preview, PipelineStage::Enhance, PipelineStage::Smooth, PipelineStage::Final};
  ASSERT_TRUE(run_pipeline(syn_->scene, opts).ok());
  auto a = snapshot(run_->out_dir), b = snapshot(*tmp_ / "b");
  a.erase("metrics.json");
  b.erase("metrics.json");
  EXPECT_EQ(a, b);
}

TEST(EngineCli, RunAndExitCodes) {
  TempDir tmp;
  write_synthetic_scene(tmp / "scene", small_options());
  const std::string engine = ENGINE_PATH;
  const std::string log = (tmp / "log.txt").string();
  EXPECT_EQ(std::system((engine + " run " + (tmp / "scene").string() + " --stages track > " + log).c_str()), 0);
  EXPECT_NE(testing_support::read_file(log).find("track: done"), std::string::npos);
  EXPECT_TRUE(fs::exists(tmp / "scene/out/poses.json"));
  EXPECT_NE(std::system((engine + " run " + (tmp / "scene").string() + " --stages preview > " + log).c_str()), 0);
  EXPECT_NE(std::system((engine + " run " + (tmp / "scene").string() + " --stages bogus > " + log + " 2>&1").c_str()), 0);
  EXPECT_NE(std::system((engine + " run " + (tmp / "missing").string() + " > " + log + " 2>&1").c_str()), 0);
}
