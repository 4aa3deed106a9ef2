#include "gsplice/intrinsics.hpp"

#include "support.hpp"

#include <cmath>
#include <fstream>

using namespace gsplice;
using testing_support::random_image;
using testing_support::random_plane;
using testing_support::TempDir;

namespace {

Planed square_mask(Index n, Index side) {
  Planed m = Planed::Zero(n, n);
  m.block((n - side) / 2, (n - side) / 2, side, side).setOnes();
  return m;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Hemispherical bump normals facing the camera.
NormalMap dome_normals(Index n) {
  NormalMap nm{Image3d(n, n, 0.0), BinaryMask::Constant(n, n, true)};
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const double x = (c - (n - 1) / 2.0) / (0.6 * n), y = (r - (n - 1) / 2.0) / (0.6 * n);
      nm.normals.set_pixel(r, c, Eigen::Vector3d(x, y, -1.0).normalized());
    }
  return nm;
}

IntrinsicFrame random_frame(Index n, CounterRng& rng) {
  IntrinsicFrame f;
  f.albedo = random_image(n, n, rng, 0.1, 0.9);
  f.shading = random_image(n, n, rng, 0.2, 1.0);
  f.residual = random_image(n, n, rng, 0.0, 0.05);
  f.linear = recompose(f.albedo, f.shading, f.residual);
  return f;
}

}  // namespace

TEST(Srgb, FixedPointsAndPowerLaw) {
  const Image3d z(1, 3, 0.0), o(1, 3, 1.0), h(1, 1, 0.5);
  EXPECT_EQ(srgb_to_linear(z).max_coeff(), 0.0);
  EXPECT_EQ(srgb_to_linear(o).min_coeff(), 1.0);
  EXPECT_NEAR(srgb_to_linear(h)[0](0, 0), std::pow(0.5, 2.2), 1e-15);
  EXPECT_NEAR(std::pow(0.5, 2.2), 0.21763, 1e-5);
  EXPECT_NEAR(linear_to_srgb(Image3d(1, 1, 0.21763))[0](0, 0), 0.5, 1e-5);
  EXPECT_EQ(linear_to_srgb(z).max_coeff(), 0.0);
  EXPECT_EQ(linear_to_srgb(o).min_coeff(), 1.0);
}

TEST(Srgb, InversePair) {
  CounterRng rng(1);
  const Image3d v = random_image(8, 8, rng);
  EXPECT_LT(max_abs_diff(linear_to_srgb(srgb_to_linear(v)), v), 1e-6);
}

TEST(Srgb, FrameTagsColorSpace) {
  const Frame f{Image3d(2, 2, 0.5), ColorSpace::sRGB, 3};
  const Frame lin = srgb_to_linear(f);
  EXPECT_EQ(lin.color_space, ColorSpace::LinearRGB);
  EXPECT_EQ(lin.index, 3);
  EXPECT_ERROR_KIND(srgb_to_linear(lin), ErrorKind::ValueOutOfRange);
}

TEST(Recompose, IdentitiesAndSelfConsistency) {
  CounterRng rng(2);
  const Image3d a = random_image(5, 5, rng);
  EXPECT_EQ(max_abs_diff(recompose(a, Image3d(5, 5, 1.0), Image3d(5, 5, 0.0)), a), 0.0);
  const Image3d r = random_image(5, 5, rng);
  EXPECT_EQ(max_abs_diff(recompose(Image3d(5, 5, 0.0), a, r), r), 0.0);
  const IntrinsicFrame f = random_frame(6, rng);
  EXPECT_LT(f.decomposition_error(), 1e-5);
}

TEST(PartitionRegions, FullImageMask) {
  const Planed m = Planed::Ones(12, 9);
  const RegionMasks r = partition_regions(m, 3);
  EXPECT_EQ(r.background.abs().maxCoeff(), 0.0);
  EXPECT_TRUE((r.surrounding == 1.0 - m).all());
}

TEST(PartitionRegions, BoxArithmetic) {
  const Planed m = square_mask(100, 10);
  const RegionMasks r = partition_regions(m, 5);
  for (Index row = 0; row < 100; ++row)
    for (Index col = 0; col < 100; ++col) {
      const bool inside = row >= 40 && row < 60 && col >= 40 && col < 60;
      ASSERT_EQ(r.background(row, col), inside ? 0.0 : 1.0) << row << "," << col;
    }
}

TEST(PartitionRegions, SumsToOneExactly) {
  CounterRng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Planed m = random_plane(30, 40, rng).square().square();
    m(rng.uniform_int(0, 29), rng.uniform_int(0, 39)) = 1.0;
    const RegionMasks r = partition_regions(m, rng.uniform_int(0, 12));
    EXPECT_TRUE((r.bracelet + r.background + r.surrounding == 1.0).all());
    EXPECT_GE(r.surrounding.minCoeff(), 0.0);
  }
}

TEST(PartitionRegions, EmptyMaskAndDefaultExpand) {
  EXPECT_ERROR_KIND(partition_regions(Planed::Zero(8, 8), 2), ErrorKind::EmptyMask);
  EXPECT_ERROR_KIND(default_expand_px(Planed::Zero(8, 8)), ErrorKind::EmptyMask);
  EXPECT_EQ(default_expand_px(square_mask(100, 40)), static_cast<int>(std::lround(0.25 * std::hypot(40.0, 40.0))));
}

TEST(RegionShadings, ElementwiseOracle) {
  CounterRng rng(4);
  const Image3d s = random_image(10, 10, rng);
  RegionMasks ones{Planed::Ones(10, 10), Planed::Zero(10, 10), Planed::Zero(10, 10)};
  const RegionShadings a = region_shadings(s, ones);
  EXPECT_EQ(max_abs_diff(a.bracelet, s), 0.0);
  EXPECT_EQ(a.background.max_coeff(), 0.0);

  Planed m = random_plane(10, 10, rng);
  m(5, 5) = 1.0;
  const RegionMasks masks = partition_regions(m, 2);
  const RegionShadings b = region_shadings(s, masks);
  for (int k = 0; k < 3; ++k)
    for (Index i = 0; i < s[k].size(); ++i) {
      ASSERT_EQ(b.bracelet[k].data()[i], masks.bracelet.data()[i] * s[k].data()[i]);
      ASSERT_EQ(b.surrounding[k].data()[i], masks.surrounding.data()[i] * s[k].data()[i]);
    }
  EXPECT_LT(max_abs_diff(b.bracelet + b.background + b.surrounding, s), 1e-15);
}

TEST(EnhanceFrame, IdentityPathFollowsResidualPolicy) {
  CounterRng rng(5);
  const IntrinsicFrame f = random_frame(40, rng);
  const RegionMasks masks = partition_regions(square_mask(40, 8), 4);
  IdentityEnhancer e;
  const NormalMap n = dome_normals(40);
  const EnhanceResult r = enhance_frame(f, masks, n, e);
  // Outside the background the residual is dropped; inside it the frame is untouched.
  const Planed keep = masks.background, edit = 1.0 - keep;
  const Image3d expected =
      keep * linear_to_srgb(f.linear) + edit * linear_to_srgb(f.albedo * f.shading + keep * f.residual);
  EXPECT_LT(max_abs_diff(r.refined.pixels, expected), 1e-12);
  for (Index row = 0; row < 40; ++row)
    for (Index col = 0; col < 40; ++col)
      if (keep(row, col) == 1.0)
        for (int k = 0; k < 3; ++k)
          ASSERT_LE(std::abs(r.refined.pixels[k](row, col) - linear_to_srgb(f.linear)[k](row, col)), 1.0 / 255);
  EXPECT_EQ(r.clamped, 0u);
}

TEST(EnhanceFrame, LambertianRecoversKnownLight) {
  const Index n = 64;
  const NormalMap normals = dome_normals(n);
  const Eigen::Vector3d light = Eigen::Vector3d(0.4, -0.5, -0.75).normalized();
  const Eigen::Vector3d wrong = Eigen::Vector3d(-0.6, 0.6, -0.5).normalized();
  const Planed m = square_mask(n, 16);
  const RegionMasks masks = partition_regions(m, 6);

  IntrinsicFrame f;
  f.albedo = Image3d(n, n, 0.6);
  f.residual = Image3d(n, n, 0.0);
  f.shading = Image3d(n, n, 0.0);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) {
      const Eigen::Vector3d nn = normals.at(r, c);
      const Eigen::Vector3d& l = m(r, c) > 0.5 ? wrong : light;  // bracelet pre-lit from the wrong side
      f.shading.set_pixel(r, c, Eigen::Vector3d::Constant(0.3 + 0.7 * std::max(0.0, nn.dot(l))));
    }
  f.linear = recompose(f.albedo, f.shading, f.residual);

  LambertianParams params;
  params.alpha = 2.0;
  AnalyticLambertianEnhancer e(params);
  const RegionShadings parts = region_shadings(f.shading, masks);
  const Image3d relit = e.relight(parts.bracelet, parts.background, normals, EnhanceContext{masks, 0});
  EXPECT_LT((e.last_fit().light.normalized() - light).norm(), 1e-6);
  EXPECT_NEAR(e.last_fit().ambient, 0.3, 1e-6);

  std::vector<double> got, oracle, before;
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (m(r, c) > 0.5) {
        got.push_back(luminance(relit)(r, c));
        oracle.push_back(std::pow(std::max(0.0, normals.at(r, c).dot(light)), params.alpha));
        before.push_back(f.shading[0](r, c));
      }
  EXPECT_GT(correlation(got, oracle), 0.95);
  EXPECT_LT(correlation(before, oracle), 0.5);

  const EnhanceResult full = enhance_frame(f, masks, normals, e);
  const Image3d original = linear_to_srgb(f.linear);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (masks.background(r, c) == 1.0)
        for (int k = 0; k < 3; ++k) ASSERT_LE(std::abs(full.refined.pixels[k](r, c) - original[k](r, c)), 1.0 / 255);
}

TEST(ExternalEnhancer, ScriptProtocol) {
  TempDir dir;
  const fs::path ok = dir / "pass.sh";
  std::ofstream(ok) << "#!/bin/sh\ncp \"$1/cond1.pfm\" \"$1/out.pfm\"\n";
  const fs::path fail = dir / "fail.sh";
  std::ofstream(fail) << "#!/bin/sh\nexit 3\n";
  const fs::path silent = dir / "silent.sh";
  std::ofstream(silent) << "#!/bin/sh\nexit 0\n";

  CounterRng rng(6);
  const Image3d s = random_image(6, 6, rng).map([](const Planed& p) -> Planed { return p.cast<float>().cast<double>(); });
  const RegionMasks masks = partition_regions(square_mask(6, 2), 1);
  const NormalMap normals = dome_normals(6);
  const EnhanceContext ctx{masks, 7};

  ExternalEnhancer pass("sh " + ok.string(), dir / "work");
  EXPECT_EQ(max_abs_diff(pass.relight(s, s, normals, ctx), s), 0.0);
  EXPECT_TRUE(fs::exists(dir / "work/relight_00007/meta.json"));
  EXPECT_TRUE(fs::exists(dir / "work/relight_00007/cond3.pfm"));

  ExternalEnhancer failing("sh " + fail.string(), dir / "work");
  EXPECT_ERROR_KIND(failing.shadow(s, s, s, ctx), ErrorKind::EnhancerFailure);
  ExternalEnhancer quiet("sh " + silent.string(), dir / "work");
  EXPECT_ERROR_KIND(quiet.refine_srgb(s, s, s, ctx), ErrorKind::EnhancerFailure);

  EXPECT_ERROR_KIND(make_enhancer("nope", {}, dir.path()), ErrorKind::ConfigError);
  EXPECT_EQ(make_enhancer("external:true", {}, dir.path())->name(), "external");
}

TEST(L1Loss, Oracle) {
  CounterRng rng(7);
  const Planed a = random_plane(9, 9, rng);
  EXPECT_EQ(l1_loss(a, a), 0.0);
  EXPECT_NEAR(l1_loss(Planed(a + 0.1), a), 0.1, 1e-12);
  const Planed b = random_plane(9, 9, rng);
  double direct = 0;
  for (Index i = 0; i < a.size(); ++i) direct += std::abs(a.data()[i] - b.data()[i]);
  EXPECT_NEAR(l1_loss(a, b), direct / a.size(), 1e-9);
}

TEST(MultiscaleGradLoss, Properties) {
  CounterRng rng(8);
  const Planed a = random_plane(32, 32, rng);
  EXPECT_EQ(multiscale_grad_loss(a, a, 3), 0.0);
  EXPECT_NEAR(multiscale_grad_loss(Planed::Constant(16, 16, 0.2), Planed::Constant(16, 16, 0.9), 2), 0.0, 1e-15);
  Planed ramp(16, 16);
  for (Index r = 0; r < 16; ++r)
    for (Index c = 0; c < 16; ++c) ramp(r, c) = 0.03 * c;
  EXPECT_NEAR(multiscale_grad_loss(ramp, Planed::Zero(16, 16), 1), 0.03, 1e-9);
  EXPECT_ERROR_KIND(multiscale_grad_loss(Planed::Zero(4, 4), Planed::Zero(4, 4), 3), ErrorKind::ImageTooSmall);
}
