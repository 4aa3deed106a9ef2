#include "gsplice/api.hpp"
#include "gsplice/occlusion.hpp"
#include "gsplice/synthetic.hpp"

#include "support.hpp"

#include <httplib.h>

using namespace gsplice;
using nlohmann::json;
using testing_support::TempDir;

namespace {

class Api : public ::testing::Test {
 protected:
  void SetUp() override {
    SyntheticOptions o;
    o.width = 64;
    o.height = 64;
    o.frames = 4;
    syn_ = write_synthetic_scene(tmp_ / "scene", o);
    service_ = std::make_unique<ApiService>(tmp_ / "scene");
    service_->bind("127.0.0.1", 0);
    service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", service_->port());
  }

  json post(const std::string& path, const json& body, int expected = 200) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << path << ": " << res->body;
    return json::parse(res->body);
  }

  json get_json(const std::string& path, int expected = 200) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expected) << path << ": " << res->body;
    return json::parse(res->body);
  }

  std::string get_body(const std::string& path) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, 200) << path;
    return res->body;
  }

  json first_anchors(int n) const {
    json pts = json::array();
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector2d& p = syn_.scene.tracks.points[0][static_cast<std::size_t>(i)];
      pts.push_back({p.x(), p.y()});
    }
    return {{"points", pts}};
  }

  TempDir tmp_;
  SyntheticScene syn_;
  std::unique_ptr<ApiService> service_;
  std::unique_ptr<httplib::Client> client_;
};

std::string png_string(const Image3d& img) {
  const std::vector<unsigned char> bytes = encode_png(img);
  return {bytes.begin(), bytes.end()};
}

}  // namespace

TEST_F(Api, FrameIsInputPng) {
  EXPECT_EQ(get_body("/frame/0"), png_string(syn_.scene.frames[0].pixels));
  EXPECT_EQ(get_body("/frame/3"), png_string(syn_.scene.frames[3].pixels));
  EXPECT_EQ(get_json("/frame/4", 404)["kind"], "MissingFile");
}

TEST_F(Api, EmptyPoseEditKeepsDefaultPlacement) {
  post("/pose", json::object());
  const Scene& s = syn_.scene;
  const RenderOutput r = render(s.splats, s.camera, s.config.placement.pose);
  const OcclusionMask occ = make_occlusion(s.depth[0], {r.depth, r.alpha > 0.0}, 1.0, s.config.occlusion_sigma);
  const Frame object{r.unpremultiplied(), ColorSpace::sRGB, 0};
  EXPECT_EQ(get_body("/preview/0"), png_string(composite_preview(s.frames[0], object, r.alpha, occ.soft).pixels));
}

TEST_F(Api, PoseEditIsCheckpointed) {
  const json st = post("/pose", {{"T", {0.0, 0.01, 0.6}}, {"scale", 2.0}});
  EXPECT_EQ(st["placement"]["scale"], 2.0);
  const auto saved = load_placement_state(tmp_ / "scene/placement.json");
  ASSERT_TRUE(saved);
  EXPECT_EQ(saved->scale, 2.0);
  EXPECT_EQ(saved->pose.translation, Eigen::Vector3d(0.0, 0.01, 0.6));
  EXPECT_LT(saved->pose.rotation.angularDistance(syn_.scene.config.placement.pose.rotation), 1e-12);
  EXPECT_EQ(service_->placement().scale, 2.0);
}

TEST_F(Api, BadRequestsAreRejected) {
  auto res = client_->Post("/pose", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  post("/pose", {{"rotation", {1, 0, 0, 0}}}, 400);
  post("/pose", {{"scale", -1.0}}, 400);
  post("/anchors", {{"points", {{1000.0, 5.0}}}}, 400);
  post("/anchors", {{"pts", json::array()}}, 400);
  EXPECT_EQ(get_json("/nothing", 404)["error"], "Not Found");
}

TEST_F(Api, DepthSampleAndMap) {
  const json j = get_json("/depth/0?u=40&v=10");
  EXPECT_NEAR(j["depth"].get<double>(), syn_.scene.depth[0].depth(10, 40), 1e-12);
  EXPECT_TRUE(j["valid"].get<bool>());
  get_json("/depth/0?u=-3&v=10", 400);
  get_json("/depth/0?u=3", 400);
  EXPECT_EQ(get_body("/depth/1"), encode_pfm(syn_.scene.depth[1].depth));
}

TEST_F(Api, SolveNeedsEnoughAnchors) {
  post("/anchors", first_anchors(5));
  const json err = post("/solve", json::object(), 409);
  EXPECT_NE(err["error"].get<std::string>().find("need ≥ 6 anchors"), std::string::npos);
  EXPECT_FALSE(get_json("/status")["solved"].get<bool>());
}

TEST_F(Api, SolveMatchesHeadlessTrackRun) {
  post("/anchors", first_anchors(6));
  const json solved = post("/solve", json::object());
  ASSERT_TRUE(solved["solved"].get<bool>());
  ASSERT_EQ(solved["residuals"].size(), 4u);
  post("/lock", json::object());
  post("/lock", json::object());

  RunOptions opts;
  opts.stages = {PipelineStage::Track};
  const PipelineRun run = run_pipeline(tmp_ / "scene", opts);
  ASSERT_TRUE(run.ok());
  EXPECT_EQ(run.metrics["tracks_used"], 6);
  for (int t = 0; t < 4; ++t)
    EXPECT_NEAR(solved["residuals"][t].get<double>(), run.metrics["pnp_rms_px"][t].get<double>(), 1e-9) << t;

  // The solved pose drives the preview, which now shows the object over the input.
  EXPECT_NE(get_body("/preview/2"), get_body("/frame/2"));
}

TEST_F(Api, LockFreezesPlacement) {
  const json st = post("/lock", json::object());
  EXPECT_TRUE(st["placement"]["locked"].get<bool>());
  EXPECT_EQ(post("/pose", {{"scale", 3.0}}, 409)["kind"], "locked");
  post("/anchors", first_anchors(6), 409);
  EXPECT_EQ(service_->placement().scale, 1.0);
  EXPECT_TRUE(load_placement_state(tmp_ / "scene/placement.json")->locked);
}

TEST_F(Api, StatusDescribesScene) {
  const json st = get_json("/status");
  EXPECT_EQ(st["frames"], 4);
  EXPECT_EQ(st["width"], 64);
  EXPECT_EQ(st["min_anchors"], 6);
  EXPECT_DOUBLE_EQ(st["intrinsics"]["fx"].get<double>(), syn_.scene.camera.fx);
}

TEST_F(Api, RestartResumesFromCheckpoint) {
  post("/anchors", first_anchors(7));
  service_.reset();
  ApiService again(tmp_ / "scene");
  EXPECT_EQ(again.placement().anchors.size(), 7u);
}

TEST_F(Api, PortInUseIsIoError) {
  ApiService other(tmp_ / "scene");
  EXPECT_ERROR_KIND(other.bind("127.0.0.1", service_->port()), ErrorKind::IoError);
}
