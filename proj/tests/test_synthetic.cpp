#include "gsplice/synthetic.hpp"

#include "support.hpp"

using namespace gsplice;

TEST(SyntheticScene, TracksAreProjectionsOfAnchors) {
  SyntheticOptions o;
  o.width = o.height = 64;
  o.frames = 5;
  const SyntheticScene syn = make_synthetic_scene(o);
  ASSERT_EQ(syn.scene.frame_count(), 5u);
  ASSERT_EQ(syn.anchor_points.size(), 12u);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t i = 0; i < syn.anchor_points.size(); ++i) {
      const Eigen::Vector2d px = syn.scene.camera.project(syn.true_poses[t].apply(syn.anchor_points[i]));
      EXPECT_LT((px - syn.scene.tracks.points[t][i]).norm(), 1e-9);
    }
  EXPECT_EQ(syn.depth_scale[0], 1.0);
}

TEST(SyntheticScene, AnchorsRespectRadiusRange) {
  SyntheticOptions o;
  o.anchor_radius_min = 25;
  o.anchor_radius_max = 30;
  o.occluder = false;
  const SyntheticScene syn = make_synthetic_scene(o);
  const Camera& k = syn.scene.camera;
  for (const Eigen::Vector2d& px : syn.scene.tracks.points[0]) {
    const double r = (px - Eigen::Vector2d(k.cx, k.cy)).norm();
    EXPECT_GE(r, 25 - 1.0);
    EXPECT_LE(r, 30 + 1.0);
  }
}

TEST(SyntheticScene, FocalOverrideAndValidation) {
  SyntheticOptions o;
  o.focal_px = 90;
  EXPECT_EQ(make_synthetic_scene(o).scene.camera.fx, 90);
  o.anchor_radius_max = 10;
  EXPECT_ERROR_KIND(make_synthetic_scene(o), ErrorKind::ValueOutOfRange);
  o = {};
  o.width = 16;
  EXPECT_ERROR_KIND(make_synthetic_scene(o), ErrorKind::ValueOutOfRange);
}

TEST(SyntheticScene, DepthScaleOnlyWhenRequested) {
  SyntheticOptions o;
  o.width = o.height = 48;
  o.frames = 3;
  EXPECT_EQ(make_synthetic_scene(o).depth_scale[0], 1.0);
  EXPECT_NE(make_synthetic_scene(o).depth_scale[1], 1.0);
  o.vary_depth_scale = false;
  for (const double rho : make_synthetic_scene(o).depth_scale) EXPECT_EQ(rho, 1.0);
}

TEST(SyntheticScene, DiskRoundTripKeepsTracks) {
  testing_support::TempDir tmp;
  SyntheticOptions o;
  o.width = o.height = 48;
  o.frames = 2;
  const SyntheticScene syn = write_synthetic_scene(tmp / "s", o);
  const Scene loaded = load_scene(tmp / "s");
  EXPECT_EQ(loaded.tracks.points[1][3], syn.scene.tracks.points[1][3]);
  EXPECT_EQ(loaded.splats.size(), syn.scene.splats.size());
  EXPECT_EQ(loaded.frames.size(), 2u);
}
