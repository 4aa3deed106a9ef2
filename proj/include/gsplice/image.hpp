#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace gsplice {

using Index = Eigen::Index;

/// Single-channel raster, rows = image height, cols = image width.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Planed = Plane<double>;
using Planef = Plane<float>;
using BinaryMask = Plane<bool>;

/// Three-channel raster stored as planes so that per-channel math stays an
/// Eigen expression.
template <typename Scalar>
struct Image3 {
  std::array<Plane<Scalar>, 3> c;

  Image3() = default;
  Image3(Index rows, Index cols, Scalar value = Scalar(0)) {
    for (auto& p : c) p.setConstant(rows, cols, value);
  }
  explicit Image3(const Plane<Scalar>& gray) : c{gray, gray, gray} {}
  Image3(Plane<Scalar> r, Plane<Scalar> g, Plane<Scalar> b) : c{std::move(r), std::move(g), std::move(b)} {}

  Index rows() const { return c[0].rows(); }
  Index cols() const { return c[0].cols(); }
  bool empty() const { return c[0].size() == 0; }

  Plane<Scalar>& operator[](int k) { return c[static_cast<std::size_t>(k)]; }
  const Plane<Scalar>& operator[](int k) const { return c[static_cast<std::size_t>(k)]; }

  Eigen::Matrix<Scalar, 3, 1> pixel(Index row, Index col) const {
    return {c[0](row, col), c[1](row, col), c[2](row, col)};
  }
  void set_pixel(Index row, Index col, const Eigen::Matrix<Scalar, 3, 1>& v) {
    for (int k = 0; k < 3; ++k) c[k](row, col) = v[k];
  }

  template <typename F>
  Image3 map(F&& f) const {
    Image3 out;
    for (int k = 0; k < 3; ++k) out.c[k] = f(c[k]);
    return out;
  }

  template <typename Other>
  Image3<Other> cast() const {
    Image3<Other> out;
    for (int k = 0; k < 3; ++k) out.c[k] = c[k].template cast<Other>();
    return out;
  }

  Scalar min_coeff() const { return std::min({c[0].minCoeff(), c[1].minCoeff(), c[2].minCoeff()}); }
  Scalar max_coeff() const { return std::max({c[0].maxCoeff(), c[1].maxCoeff(), c[2].maxCoeff()}); }
  bool all_finite() const { return c[0].isFinite().all() && c[1].isFinite().all() && c[2].isFinite().all(); }
};

using Image3d = Image3<double>;
using Image3f = Image3<float>;

template <typename S>
Image3<S> operator+(const Image3<S>& a, const Image3<S>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
template <typename S>
Image3<S> operator-(const Image3<S>& a, const Image3<S>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
template <typename S>
Image3<S> operator*(const Image3<S>& a, const Image3<S>& b) {
  return {a[0] * b[0], a[1] * b[1], a[2] * b[2]};
}
/// Broadcast a single-channel weight over all channels.
template <typename S>
Image3<S> operator*(const Plane<S>& w, const Image3<S>& a) {
  return {w * a[0], w * a[1], w * a[2]};
}
template <typename S>
Image3<S> operator*(S s, const Image3<S>& a) {
  return {s * a[0], s * a[1], s * a[2]};
}

template <typename S>
Image3<S> clamp(const Image3<S>& a, S lo, S hi) {
  return a.map([&](const Plane<S>& p) -> Plane<S> { return p.max(lo).min(hi); });
}

/// Rec. 709 luminance.
template <typename S>
Plane<S> luminance(const Image3<S>& a) {
  return S(0.2126) * a[0] + S(0.7152) * a[1] + S(0.0722) * a[2];
}

template <typename S>
S max_abs_diff(const Image3<S>& a, const Image3<S>& b) {
  S m = 0;
  for (int k = 0; k < 3; ++k) m = std::max(m, (a[k] - b[k]).abs().maxCoeff());
  return m;
}

/// Reflect an out-of-range index back into [0, n) with edge duplication
/// (... c b a | a b c ... ), folding repeatedly for tiny images.
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

/// Normalized 1-D Gaussian taps for offsets -radius..radius, radius = ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian convolution with reflect boundary. sigma == 0 is the identity.
Planed gaussian_blur(const Planed& src, double sigma);
Image3d gaussian_blur(const Image3d& src, double sigma);

/// Exact Euclidean distance (pixels) from every pixel to the nearest true
/// pixel of `mask`; +inf everywhere when the mask is empty.
Planed distance_to_mask(const BinaryMask& mask);

/// Bilinear sample with clamping to the raster.
double bilinear(const Planed& p, double x, double y);

}  // namespace gsplice
