#include "gsplice/image.hpp"
#include "gsplice/error.hpp"

#include <algorithm>
#include <limits>

namespace gsplice {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidDepth: return "InvalidDepth";
    case ErrorKind::Degenerate: return "Degenerate";
    case ErrorKind::DegenerateDepth: return "DegenerateDepth";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::EnhancerFailure: return "EnhancerFailure";
    case ErrorKind::InterpolatorFailure: return "InterpolatorFailure";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {
std::string format_error(ErrorKind kind, const std::string& subject, const std::string& detail) {
  std::string msg(to_string(kind));
  msg += "(\"" + subject + "\")";
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}
}  // namespace

Error::Error(ErrorKind kind, std::string subject, const std::string& detail)
    : std::runtime_error(format_error(kind, subject, detail)), kind_(kind), subject_(std::move(subject)) {}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0;
  for (int k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * k * k / (sigma * sigma));
    taps[static_cast<std::size_t>(k + radius)] = v;
    sum += v;
  }
  for (double& v : taps) v /= sum;
  return taps;
}

Planed gaussian_blur(const Planed& src, double sigma) {
  if (sigma <= 0 || src.size() == 0) return src;
  const std::vector<double> taps = gaussian_kernel(sigma);
  const Index radius = static_cast<Index>(taps.size() / 2);
  const Index rows = src.rows();
  const Index cols = src.cols();

  Planed horiz(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      double acc = 0;
      for (Index k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] * src(r, reflect_index(c + k, cols));
      }
      horiz(r, c) = acc;
    }
  }
  Planed out(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      double acc = 0;
      for (Index k = -radius; k <= radius; ++k) {
        acc += taps[static_cast<std::size_t>(k + radius)] * horiz(reflect_index(r + k, rows), c);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

Image3d gaussian_blur(const Image3d& src, double sigma) {
  return src.map([sigma](const Planed& p) { return gaussian_blur(p, sigma); });
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, in place on f.
// Empty samples carry kFar instead of +inf so the intersection arithmetic
// stays finite.
constexpr double kFar = 1e20;

void squared_distance_1d(std::vector<double>& f) {
  const std::size_t n = f.size();
  if (n == 0) return;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(n);
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  auto intersect = [&](std::size_t q, std::size_t p) {
    const double dq = static_cast<double>(q);
    const double dp = static_cast<double>(p);
    return ((f[q] + dq * dq) - (f[p] + dp * dp)) / (2.0 * dq - 2.0 * dp);
  };
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double dq = static_cast<double>(q);
    while (z[k + 1] < dq) ++k;
    const double diff = dq - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
  f = std::move(d);
}

}  // namespace

Planed distance_to_mask(const BinaryMask& mask) {
  const Index rows = mask.rows();
  const Index cols = mask.cols();
  Planed sq(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) sq(r, c) = mask(r, c) ? 0.0 : kFar;

  std::vector<double> line;
  line.resize(static_cast<std::size_t>(rows));
  for (Index c = 0; c < cols; ++c) {
    for (Index r = 0; r < rows; ++r) line[static_cast<std::size_t>(r)] = sq(r, c);
    squared_distance_1d(line);
    for (Index r = 0; r < rows; ++r) sq(r, c) = line[static_cast<std::size_t>(r)];
  }
  line.resize(static_cast<std::size_t>(cols));
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) line[static_cast<std::size_t>(c)] = sq(r, c);
    squared_distance_1d(line);
    for (Index c = 0; c < cols; ++c) sq(r, c) = line[static_cast<std::size_t>(c)];
  }
  return (sq >= 0.5 * kFar).select(std::numeric_limits<double>::infinity(), sq.sqrt());
}

double bilinear(const Planed& p, double x, double y) {
  const double xc = std::clamp(x, 0.0, static_cast<double>(p.cols() - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(p.rows() - 1));
  const Index x0 = static_cast<Index>(std::floor(xc));
  const Index y0 = static_cast<Index>(std::floor(yc));
  const Index x1 = std::min<Index>(x0 + 1, p.cols() - 1);
  const Index y1 = std::min<Index>(y0 + 1, p.rows() - 1);
  const double fx = xc - static_cast<double>(x0);
  const double fy = yc - static_cast<double>(y0);
  return (1 - fy) * ((1 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1 - fx) * p(y1, x0) + fx * p(y1, x1));
}

}  // namespace gsplice
