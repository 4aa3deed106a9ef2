#include "gsplice/image.hpp"

#include "support.hpp"

#include <cmath>
#include <limits>

using namespace gsplice;
using testing_support::random_plane;

TEST(GaussianKernel, NormalizedWithThreeSigmaSupport) {
  const std::vector<double> k = gaussian_kernel(2.0);
  ASSERT_EQ(k.size(), 13u);
  double sum = 0;
  for (double v : k) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-15);
  EXPECT_NEAR(k[6] / k[8], std::exp(2.0 / 4.0), 1e-12);
}

TEST(GaussianBlur, ConstantAndZeroSigma) {
  const Planed c = Planed::Constant(10, 7, 0.37);
  EXPECT_LT((gaussian_blur(c, 3.0) - c).abs().maxCoeff(), 1e-14);
  CounterRng rng(3);
  const Planed r = random_plane(9, 11, rng);
  EXPECT_TRUE((gaussian_blur(r, 0.0) == r).all());
}

TEST(GaussianBlur, InteriorMatchesDirectSeparableSum) {
  CounterRng rng(5);
  const Planed src = random_plane(30, 30, rng);
  const Planed out = gaussian_blur(src, 1.5);
  const std::vector<double> k = gaussian_kernel(1.5);
  const int rad = static_cast<int>(k.size() / 2);
  double direct = 0;
  for (int dy = -rad; dy <= rad; ++dy)
    for (int dx = -rad; dx <= rad; ++dx)
      direct += k[static_cast<std::size_t>(dy + rad)] * k[static_cast<std::size_t>(dx + rad)] * src(15 + dy, 14 + dx);
  EXPECT_NEAR(out(15, 14), direct, 1e-12);
}

TEST(ReflectIndex, FoldsWithEdgeDuplication) {
  EXPECT_EQ(reflect_index(-1, 5), 0);
  EXPECT_EQ(reflect_index(-2, 5), 1);
  EXPECT_EQ(reflect_index(5, 5), 4);
  EXPECT_EQ(reflect_index(6, 5), 3);
  EXPECT_EQ(reflect_index(-7, 3), 0);
  EXPECT_EQ(reflect_index(4, 1), 0);
}

TEST(DistanceToMask, MatchesBruteForce) {
  CounterRng rng(11);
  BinaryMask m = BinaryMask::Constant(17, 23, false);
  for (int i = 0; i < 6; ++i) m(rng.uniform_int(0, 16), rng.uniform_int(0, 22)) = true;
  const Planed d = distance_to_mask(m);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      double best = std::numeric_limits<double>::infinity();
      for (Index r2 = 0; r2 < m.rows(); ++r2)
        for (Index c2 = 0; c2 < m.cols(); ++c2)
          if (m(r2, c2)) best = std::min(best, std::hypot(double(r - r2), double(c - c2)));
      ASSERT_NEAR(d(r, c), best, 1e-9) << r << "," << c;
    }
}

TEST(DistanceToMask, EmptyMaskIsInfinite) {
  const Planed d = distance_to_mask(BinaryMask::Constant(4, 4, false));
  EXPECT_TRUE(d.isInf().all());
}

TEST(Bilinear, ExactOnAffineFunctions) {
  Planed p(6, 8);
  for (Index r = 0; r < 6; ++r)
    for (Index c = 0; c < 8; ++c) p(r, c) = 0.5 * c - 0.25 * r + 1.0;
  EXPECT_NEAR(bilinear(p, 3.3, 2.7), 0.5 * 3.3 - 0.25 * 2.7 + 1.0, 1e-12);
  EXPECT_NEAR(bilinear(p, -2.0, 0.0), p(0, 0), 1e-12);
}

TEST(Image3, ArithmeticAndLuminance) {
  Image3d a(2, 2, 0.5), b(2, 2, 0.25);
  EXPECT_DOUBLE_EQ((a + b)[1](0, 0), 0.75);
  EXPECT_DOUBLE_EQ((a * b)[2](1, 1), 0.125);
  const Planed w = Planed::Constant(2, 2, 2.0);
  EXPECT_DOUBLE_EQ((w * a)[0](1, 0), 1.0);
  EXPECT_NEAR(luminance(Image3d(2, 2, 1.0))(0, 0), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 0.25);
}
