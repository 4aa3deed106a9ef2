#include "detail/process.hpp"
#include "gsplice/error.hpp"
#include "gsplice/intrinsics.hpp"

#include <Eigen/Dense>

#include <fstream>

namespace gsplice {

LambertianFit fit_single_light(const Planed& background_gray, const Planed& background_mask, const NormalMap& normals,
                               const Image3d& background_shading) {
  std::vector<Index> rows, cols;
  for (Index r = 0; r < background_gray.rows(); ++r)
    for (Index c = 0; c < background_gray.cols(); ++c)
      if (background_mask(r, c) > 0.5 && normals.valid(r, c)) {
        rows.push_back(r);
        cols.push_back(c);
      }
  LambertianFit fit;
  fit.samples = rows.size();
  if (rows.size() < 4) throw Error(ErrorKind::Degenerate, "background", "fewer than 4 background pixels with normals");

  const std::size_t n = rows.size();
  Eigen::MatrixX3d nrm(static_cast<Index>(n), 3);
  Eigen::VectorXd target(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    nrm.row(static_cast<Index>(i)) = normals.at(rows[i], cols[i]).transpose();
    target[static_cast<Index>(i)] = background_gray(rows[i], cols[i]);
  }

  // Alternate between the active set {N . l > 0} and a linear solve for (a, l).
  std::vector<bool> active(n, true);
  Eigen::Vector4d params = Eigen::Vector4d::Zero();
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::MatrixXd design(static_cast<Index>(n), 4);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Index>(i);
      design(row, 0) = 1.0;
      if (active[i])
        design.block<1, 3>(row, 1) = nrm.row(row);
      else
        design.block<1, 3>(row, 1).setZero();
    }
    params = design.colPivHouseholderQr().solve(target);
    fit.iterations = iter + 1;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const bool now = nrm.row(static_cast<Index>(i)).dot(params.tail<3>()) > 0;
      if (now != active[i]) changed = true;
      active[i] = now;
    }
    if (!changed) break;
  }
  fit.ambient = params[0];
  fit.light = params.tail<3>();

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) mean += background_shading.pixel(rows[i], cols[i]);
  mean /= static_cast<double>(n);
  const double lum = 0.2126 * mean[0] + 0.7152 * mean[1] + 0.0722 * mean[2];
  fit.chroma = lum > 1e-12 ? Eigen::Vector3d(mean / lum) : Eigen::Vector3d::Ones();
  return fit;
}

Image3d AnalyticLambertianEnhancer::relight(const Image3d& s_bracelet, const Image3d& s_background,
                                            const NormalMap& normals, const EnhanceContext& ctx) {
  fit_ = fit_single_light(luminance(s_background), ctx.masks.background, normals, s_background);
  Image3d out(s_bracelet.rows(), s_bracelet.cols(), 0.0);
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c) {
      const double m = ctx.masks.bracelet(r, c);
      if (m <= 0) continue;
      double gray = fit_.ambient;
      if (normals.valid(r, c)) gray += std::pow(std::max(0.0, normals.at(r, c).dot(fit_.light)), params_.alpha);
      out.set_pixel(r, c, m * gray * fit_.chroma);
    }
  return out;
}

namespace {

Planed shifted(const Planed& p, double dx, double dy) {
  Planed out = Planed::Zero(p.rows(), p.cols());
  for (Index r = 0; r < p.rows(); ++r)
    for (Index c = 0; c < p.cols(); ++c) {
      const double x = static_cast<double>(c) - dx;
      const double y = static_cast<double>(r) - dy;
      if (x < 0 || y < 0 || x > static_cast<double>(p.cols() - 1) || y > static_cast<double>(p.rows() - 1)) continue;
      out(r, c) = bilinear(p, x, y);
    }
  return out;
}

}  // namespace

Image3d AnalyticLambertianEnhancer::shadow(const Image3d& s_relit, const Image3d& s_background,
                                           const Image3d& s_surrounding, const EnhanceContext& ctx) {
  // Cast the silhouette away from the light in the image plane.
  const Eigen::Vector2d planar(fit_.light.x(), fit_.light.y());
  Planed silhouette = ctx.masks.bracelet;
  if (planar.norm() > 1e-9) {
    const Eigen::Vector2d offset = -planar.normalized() * params_.shadow_offset_px;
    silhouette = shifted(silhouette, offset.x(), offset.y());
  }
  const Planed shade = gaussian_blur(silhouette, params_.shadow_sigma).min(1.0);
  const Planed darken = 1.0 - params_.shadow_strength * shade;
  return s_relit + s_background + darken * s_surrounding;
}

Image3d AnalyticLambertianEnhancer::refine_srgb(const Image3d& diffuse_srgb, const Image3d&, const Image3d&,
                                                const EnhanceContext&) {
  return diffuse_srgb;
}

ExternalEnhancer::ExternalEnhancer(std::string command, fs::path work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {}

Image3d ExternalEnhancer::invoke(const std::string& stage, int frame, const Image3d& c1, const Image3d& c2,
                                 const Image3d& c3) {
  const fs::path dir = work_dir_ / (stage + "_" + frame_name(frame, ""));
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, dir.string(), ec.message());
  write_pfm(dir / "cond1.pfm", c1);
  write_pfm(dir / "cond2.pfm", c2);
  write_pfm(dir / "cond3.pfm", c3);
  {
    std::ofstream meta(dir / "meta.json");
    meta << nlohmann::json{{"stage", stage}, {"frame", frame}}.dump() << "\n";
  }
  const int status = detail::run_with_dir(command_, dir);
  if (status != 0)
    throw Error(ErrorKind::EnhancerFailure, stage, "command exited with status " + std::to_string(status));
  if (!fs::exists(dir / "out.pfm")) throw Error(ErrorKind::EnhancerFailure, stage, "no out.pfm produced");
  return read_pfm(dir / "out.pfm");
}

Image3d ExternalEnhancer::relight(const Image3d& s_bracelet, const Image3d& s_background, const NormalMap& normals,
                                  const EnhanceContext& ctx) {
  return invoke("relight", ctx.frame_index, s_bracelet, s_background, normals.normals);
}

Image3d ExternalEnhancer::shadow(const Image3d& s_relit, const Image3d& s_background, const Image3d& s_surrounding,
                                 const EnhanceContext& ctx) {
  return invoke("shadow", ctx.frame_index, s_relit, s_background, s_surrounding);
}

Image3d ExternalEnhancer::refine_srgb(const Image3d& diffuse_srgb, const Image3d& albedo, const Image3d& s_enhanced,
                                      const EnhanceContext& ctx) {
  return invoke("refine_srgb", ctx.frame_index, diffuse_srgb, albedo, s_enhanced);
}

std::unique_ptr<Enhancer> make_enhancer(const std::string& spec, const LambertianParams& params,
                                        const fs::path& work_dir) {
  if (spec == "identity") return std::make_unique<IdentityEnhancer>();
  if (spec == "lambertian") return std::make_unique<AnalyticLambertianEnhancer>(params);
  if (spec.rfind("external:", 0) == 0) return std::make_unique<ExternalEnhancer>(spec.substr(9), work_dir);
  throw Error(ErrorKind::ConfigError, "enhancer", "unknown enhancer '" + spec + "'");
}

}  // namespace gsplice
