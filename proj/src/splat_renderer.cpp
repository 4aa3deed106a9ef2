#include "gsplice/splat_renderer.hpp"
#include "gsplice/error.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

namespace gsplice {

namespace {
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                          -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

bool same_bits(const void* a, const void* b, std::size_t n) { return std::memcmp(a, b, n) == 0; }
}  // namespace

bool same_geometry(const SplatModel& a, const SplatModel& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Splat& x = a.splats[i];
    const Splat& y = b.splats[i];
    if (!same_bits(x.position.data(), y.position.data(), sizeof(double) * 3) ||
        !same_bits(x.scale.data(), y.scale.data(), sizeof(double) * 3) ||
        !same_bits(x.rotation.coeffs().data(), y.rotation.coeffs().data(), sizeof(double) * 4) ||
        !same_bits(&x.opacity, &y.opacity, sizeof(double)))
      return false;
  }
  return true;
}

SplatModel scaled(const SplatModel& model, double factor) {
  SplatModel out = model;
  for (Splat& s : out.splats) {
    s.position *= factor;
    s.scale *= factor;
  }
  return out;
}

ShBasis sh_basis(const Eigen::Vector3d& dir) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  ShBasis b;
  b[0] = kShC0;
  b[1] = -kC1 * y;
  b[2] = kC1 * z;
  b[3] = -kC1 * x;
  b[4] = kC2[0] * x * y;
  b[5] = kC2[1] * y * z;
  b[6] = kC2[2] * (2.0 * zz - xx - yy);
  b[7] = kC2[3] * x * z;
  b[8] = kC2[4] * (xx - yy);
  b[9] = kC3[0] * y * (3.0 * xx - yy);
  b[10] = kC3[1] * x * y * z;
  b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
  b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
  b[14] = kC3[5] * z * (xx - yy);
  b[15] = kC3[6] * x * (xx - 3.0 * yy);
  return b;
}

Eigen::Vector3d eval_sh(const ShCoefficients& coeffs, const Eigen::Vector3d& dir) { return coeffs * sh_basis(dir); }

Eigen::Vector3d activate_color(const Eigen::Vector3d& radiance) {
  return (radiance.array() + 0.5).max(0.0).min(1.0).matrix();
}

Image3d RenderOutput::unpremultiplied() const {
  Image3d out(color.rows(), color.cols(), 0.0);
  const Planed safe = (alpha > 0.0).select(alpha, 1.0);
  for (int k = 0; k < 3; ++k) out[k] = (alpha > 0.0).select(color[k] / safe, 0.0);
  return out;
}

RenderOutput render(const SplatModel& model, const Camera& camera, const Posed& pose, const RenderOptions& options) {
  const Index rows = camera.height;
  const Index cols = camera.width;
  const std::size_t n = model.size();

  RenderOutput out;
  out.color = Image3d(rows, cols, 0.0);
  out.alpha = Planed::Zero(rows, cols);
  out.depth = Planed::Zero(rows, cols);
  out.view_dirs.assign(n, Eigen::Vector3d::Zero());
  out.colors.assign(n, Eigen::Vector3d::Zero());
  out.camera_z.assign(n, 0.0);
  out.rendered.assign(n, false);

  const Eigen::Matrix3d rot = pose.rotation.normalized().toRotationMatrix();
  const Eigen::Vector3d cam_center = pose.center();

  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Splat& s = model.splats[i];
    const Eigen::Vector3d pc = rot * s.position + pose.translation;
    out.camera_z[i] = pc.z();
    Eigen::Vector3d dir = s.position - cam_center;
    const double len = dir.norm();
    dir = len > 0 ? Eigen::Vector3d(dir / len) : Eigen::Vector3d::UnitZ();
    out.view_dirs[i] = dir;
    const Eigen::Vector3d radiance = eval_sh(s.sh, dir);
    out.colors[i] = options.activate ? activate_color(radiance) : radiance;
    if (pc.z() > options.near_plane) order.push_back(static_cast<std::uint32_t>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (out.camera_z[a] != out.camera_z[b]) return out.camera_z[a] < out.camera_z[b];
    return a < b;
  });

  Planed transmittance = Planed::Ones(rows, cols);
  Planed depth_acc = Planed::Zero(rows, cols);

  for (const std::uint32_t id : order) {
    const Splat& s = model.splats[id];
    const Eigen::Vector3d pc = rot * s.position + pose.translation;
    const double z = pc.z();

    const Eigen::Matrix3d rs = s.rotation.normalized().toRotationMatrix();
    const Eigen::Matrix3d cov_world = rs * s.scale.cwiseAbs2().asDiagonal() * rs.transpose();
    const Eigen::Matrix3d cov_cam = rot * cov_world * rot.transpose();
    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx / z, 0, -camera.fx * pc.x() / (z * z), 0, camera.fy / z, -camera.fy * pc.y() / (z * z);
    Eigen::Matrix2d cov2 = jac * cov_cam * jac.transpose();
    cov2.diagonal().array() += options.dilation;
    const double det = cov2.determinant();
    if (!(det > 0)) continue;
    const Eigen::Matrix2d conic = cov2.inverse();

    const double u = camera.fx * pc.x() / z + camera.cx;
    const double v = camera.fy * pc.y() / z + camera.cy;
    const double mid = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = 3.0 * std::sqrt(lambda_max);

    const Index c0 = std::max<Index>(0, static_cast<Index>(std::ceil(u - radius)));
    const Index c1 = std::min<Index>(cols - 1, static_cast<Index>(std::floor(u + radius)));
    const Index r0 = std::max<Index>(0, static_cast<Index>(std::ceil(v - radius)));
    const Index r1 = std::min<Index>(rows - 1, static_cast<Index>(std::floor(v + radius)));
    if (c0 > c1 || r0 > r1) continue;

    const Eigen::Vector3d& color = out.colors[id];
    bool touched = false;
    for (Index r = r0; r <= r1; ++r) {
      for (Index c = c0; c <= c1; ++c) {
        const double dx = static_cast<double>(c) - u;
        const double dy = static_cast<double>(r) - v;
        const double maha = conic(0, 0) * dx * dx + 2.0 * conic(0, 1) * dx * dy + conic(1, 1) * dy * dy;
        if (maha > 9.0) continue;
        const double a = s.opacity * std::exp(-0.5 * maha);
        if (a < options.min_alpha) continue;
        const double t = transmittance(r, c);
        const double w = a * t;
        transmittance(r, c) = t * (1.0 - a);
        if (w == 0.0) continue;
        touched = true;
        for (int k = 0; k < 3; ++k) out.color[k](r, c) += w * color[k];
        out.alpha(r, c) += w;
        depth_acc(r, c) += w * z;
        if (options.keep_weights) {
          out.weights.push_back({static_cast<std::uint32_t>(r * cols + c), id, w});
        }
      }
    }
    out.rendered[id] = touched;
  }

  out.depth = (out.alpha > 0.0).select(depth_acc / out.alpha.max(1e-300), 0.0);
  return out;
}

Image3d replay_weights(const std::vector<PixelWeight>& weights, const std::vector<Eigen::Vector3d>& colors, Index rows,
                       Index cols) {
  Image3d out(rows, cols, 0.0);
  for (const PixelWeight& pw : weights) {
    const Index r = static_cast<Index>(pw.pixel) / cols;
    const Index c = static_cast<Index>(pw.pixel) % cols;
    for (int k = 0; k < 3; ++k) out[k](r, c) += pw.weight * colors[pw.splat][k];
  }
  return out;
}

namespace {
template <typename T>
void put_le(std::ofstream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}
template <typename T>
T get_le(const unsigned char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}
}  // namespace

void write_weight_dump(const std::filesystem::path& path, const std::vector<PixelWeight>& weights) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, path.string(), "cannot open for writing");
  for (const PixelWeight& pw : weights) {
    put_le<std::uint32_t>(os, pw.pixel);
    put_le<std::uint32_t>(os, pw.splat);
    put_le<float>(os, static_cast<float>(pw.weight));
  }
  if (!os) throw Error(ErrorKind::IoError, path.string(), "write failed");
}

std::vector<PixelWeight> read_weight_dump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::MissingFile, path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() % 12 != 0) throw Error(ErrorKind::ParseError, path.string(), "size is not a multiple of 12 bytes");
  std::vector<PixelWeight> out(buf.size() / 12);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const unsigned char* p = buf.data() + 12 * i;
    out[i] = {get_le<std::uint32_t>(p), get_le<std::uint32_t>(p + 4), get_le<float>(p + 8)};
  }
  return out;
}

}  // namespace gsplice
