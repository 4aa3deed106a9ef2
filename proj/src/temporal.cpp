#include "detail/process.hpp"
#include "gsplice/error.hpp"
#include "gsplice/temporal.hpp"

#include <cmath>
#include <fstream>

namespace gsplice {

SmoothingWindow gaussian_window(int size, double sigma) {
  if (size < 0 || size % 2 != 0) throw Error(ErrorKind::ValueOutOfRange, "window", "must be even and >= 0");
  if (!(sigma > 0)) throw Error(ErrorKind::ValueOutOfRange, "window_sigma", "must be > 0");
  SmoothingWindow w;
  w.size = size;
  const int h = size / 2;
  double sum = 0;
  for (int k = -h; k <= h; ++k) {
    w.weights.push_back(std::exp(-0.5 * k * k / (sigma * sigma)));
    sum += w.weights.back();
  }
  for (double& v : w.weights) v /= sum;
  // Mirror so the two halves are bit-identical after normalization.
  for (int k = 1; k <= h; ++k) w.weights[static_cast<std::size_t>(h + k)] = w.weights[static_cast<std::size_t>(h - k)];
  return w;
}

std::vector<WindowTap> window_taps(const SmoothingWindow& window, int t, int frame_count) {
  std::vector<WindowTap> taps;
  double sum = 0;
  for (int k = -window.half(); k <= window.half(); ++k) {
    const int f = t + k;
    if (f < 0 || f >= frame_count) continue;
    taps.push_back({f, window.at(k)});
    sum += window.at(k);
  }
  for (WindowTap& tap : taps) tap.weight /= sum;
  return taps;
}

void AdamState::reset(std::size_t splats) {
  m.assign(splats, ShCoefficients::Zero());
  v.assign(splats, ShCoefficients::Zero());
  step = 0;
}

void AdamState::apply(std::vector<ShCoefficients>& coeffs, const std::vector<ShCoefficients>& grad) {
  if (m.size() != coeffs.size()) reset(coeffs.size());
  ++step;
  const double c1 = 1.0 - std::pow(beta1, step);
  const double c2 = 1.0 - std::pow(beta2, step);
  Eigen::Matrix<double, 1, kShCoeffs> lr = Eigen::Matrix<double, 1, kShCoeffs>::Constant(lr_ac);
  lr[0] = lr_dc;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i].cwiseAbs2();
    const ShCoefficients mhat = m[i] / c1;
    const ShCoefficients vhat = v[i] / c2;
    const ShCoefficients denom = (vhat.array().sqrt() + eps).matrix();
    coeffs[i] -= (mhat.cwiseQuotient(denom).array().rowwise() * lr.array()).matrix();
  }
}

ColorFitFrame make_fit_frame(const SplatModel& model, const Camera& camera, const Posed& pose, const Image3d& target,
                             const Planed* gain, const Image3d* offset, bool activate) {
  RenderOptions opts;
  opts.keep_weights = true;
  opts.activate = activate;
  RenderOutput out = render(model, camera, pose, opts);
  ColorFitFrame f;
  f.weights = std::move(out.weights);
  f.basis.reserve(model.size());
  for (const Eigen::Vector3d& d : out.view_dirs) f.basis.push_back(sh_basis(d));
  f.target = target;
  f.gain = gain ? *gain : Planed::Ones(target.rows(), target.cols());
  f.offset = offset ? *offset : Image3d(target.rows(), target.cols(), 0.0);
  f.activate = activate;
  for (Index i = 0; i < out.alpha.size(); ++i)
    if (out.alpha.data()[i] > 0) f.pixels.push_back(static_cast<std::uint32_t>(i));
  return f;
}

namespace {

struct SplatColor {
  Eigen::Vector3d value;
  Eigen::Vector3d slope;  // d value / d radiance: 1 inside the clamp range, 0 outside
};

std::vector<SplatColor> splat_colors(const ColorFitFrame& frame, const std::vector<ShCoefficients>& coeffs) {
  std::vector<SplatColor> out(coeffs.size());
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const Eigen::Vector3d r = coeffs[i] * frame.basis[i];
    if (!frame.activate) {
      out[i] = {r, Eigen::Vector3d::Ones()};
      continue;
    }
    out[i].value = activate_color(r);
    for (int k = 0; k < 3; ++k) out[i].slope[k] = (r[k] > -0.5 && r[k] < 0.5) ? 1.0 : 0.0;
  }
  return out;
}

Image3d sum_weights(const ColorFitFrame& frame, const std::vector<SplatColor>& colors) {
  const Index rows = frame.target.rows(), cols = frame.target.cols();
  Image3d acc(rows, cols, 0.0);
  for (const PixelWeight& w : frame.weights)
    for (int k = 0; k < 3; ++k) acc[k].data()[w.pixel] += w.weight * colors[w.splat].value[k];
  return acc;
}

}  // namespace

Image3d predict(const ColorFitFrame& frame, const std::vector<ShCoefficients>& coeffs) {
  return frame.gain * sum_weights(frame, splat_colors(frame, coeffs)) + frame.offset;
}

double frame_loss(const ColorFitFrame& frame, const std::vector<ShCoefficients>& coeffs) {
  const double w = 1.0;
  return sh_fit_loss(std::span(&frame, 1), std::span(&w, 1), coeffs, nullptr);
}

double sh_fit_loss(std::span<const ColorFitFrame> frames, std::span<const double> frame_weights,
                   const std::vector<ShCoefficients>& coeffs, std::vector<ShCoefficients>* grad) {
  if (frames.size() != frame_weights.size())
    throw Error(ErrorKind::DimensionMismatch, "sh_fit_loss", "one weight per frame");
  if (grad) grad->assign(coeffs.size(), ShCoefficients::Zero());
  double total = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const ColorFitFrame& frame = frames[f];
    if (frame.pixels.empty() || frame_weights[f] == 0) continue;
    const std::vector<SplatColor> colors = splat_colors(frame, coeffs);
    const Image3d acc = sum_weights(frame, colors);
    const double norm = frame_weights[f] / (3.0 * static_cast<double>(frame.pixels.size()));

    Image3d residual(acc.rows(), acc.cols(), 0.0);
    double sse = 0;
    for (const std::uint32_t p : frame.pixels)
      for (int k = 0; k < 3; ++k) {
        const double g = frame.gain.data()[p];
        const double e = g * acc[k].data()[p] + frame.offset[k].data()[p] - frame.target[k].data()[p];
        residual[k].data()[p] = e * g;
        sse += e * e;
      }
    total += norm * sse;
    if (!grad) continue;

    std::vector<Eigen::Vector3d> dcolor(coeffs.size(), Eigen::Vector3d::Zero());
    for (const PixelWeight& w : frame.weights)
      for (int k = 0; k < 3; ++k) dcolor[w.splat][k] += w.weight * residual[k].data()[w.pixel];
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      const Eigen::Vector3d d = 2.0 * norm * dcolor[i].cwiseProduct(colors[i].slope);
      (*grad)[i] += d * frame.basis[i].transpose();
    }
  }
  return total;
}

std::vector<ShCoefficients> sh_of(const SplatModel& model) {
  std::vector<ShCoefficients> out;
  out.reserve(model.size());
  for (const Splat& s : model.splats) out.push_back(s.sh);
  return out;
}

SplatModel with_sh(const SplatModel& model, const std::vector<ShCoefficients>& coeffs) {
  SplatModel out = model;
  for (std::size_t i = 0; i < out.size(); ++i) out.splats[i].sh = coeffs[i];
  return out;
}

ShFitResult optimize_sh_colors(const SplatModel& model, std::span<const ColorFitFrame> frames,
                               std::span<const double> frame_weights, AdamState& state, const ShFitOptions& options) {
  std::vector<ShCoefficients> coeffs = sh_of(model);
  std::vector<ShCoefficients> grad;
  ShFitResult result;
  double loss = sh_fit_loss(frames, frame_weights, coeffs, &grad);
  result.initial_loss = result.final_loss = loss;
  result.model = model;
  if (loss < options.zero_loss) return result;

  std::vector<ShCoefficients> best = coeffs;
  double best_loss = loss;
  double prev = loss;
  for (int it = 0; it < options.max_iters; ++it) {
    state.apply(coeffs, grad);
    loss = sh_fit_loss(frames, frame_weights, coeffs, &grad);
    result.iterations = it + 1;
    if (loss < best_loss) {
      best_loss = loss;
      best = coeffs;
    }
    result.loss_history.push_back(best_loss);
    if (best_loss < options.zero_loss) break;
    if (std::abs(prev - loss) <= options.relative_tolerance * std::max(prev, 1e-300)) break;
    prev = loss;
  }
  result.model = with_sh(model, best);
  result.final_loss = best_loss;
  result.converged = best_loss <= options.loss_tolerance;
  return result;
}

ShFitResult optimize_sh_colors(const SplatModel& model, const std::vector<Image3d>& refined,
                               const std::vector<Posed>& poses, const Camera& camera, int t,
                               const SmoothingWindow& window, AdamState& state, int max_iters) {
  if (refined.size() != poses.size())
    throw Error(ErrorKind::DimensionMismatch, "optimize_sh_colors", "one pose per refined frame");
  const std::vector<WindowTap> taps = window_taps(window, t, static_cast<int>(refined.size()));
  std::vector<ColorFitFrame> frames;
  std::vector<double> weights;
  for (const WindowTap& tap : taps) {
    const auto k = static_cast<std::size_t>(tap.frame);
    frames.push_back(make_fit_frame(model, camera, poses[k], refined[k]));
    weights.push_back(tap.weight);
  }
  state.reset(model.size());
  ShFitOptions opts;
  opts.max_iters = max_iters;
  return optimize_sh_colors(model, frames, weights, state, opts);
}

std::vector<int> keyframes(int frame_count, int stride) {
  if (stride < 1) throw Error(ErrorKind::ValueOutOfRange, "keyframe_stride", "must be >= 1");
  std::vector<int> keys;
  for (int t = 0; t < frame_count; t += stride) keys.push_back(t);
  if (frame_count > 0 && keys.back() != frame_count - 1) keys.push_back(frame_count - 1);
  return keys;
}

std::vector<Image3d> CrossFadeInterpolator::between(const Image3d& key0, const Image3d& key1, int t0, int t1) {
  std::vector<Image3d> out;
  for (int t = t0 + 1; t < t1; ++t) {
    const double f = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
    out.push_back((1.0 - f) * key0 + f * key1);
  }
  return out;
}

ExternalInterpolator::ExternalInterpolator(std::string command, std::filesystem::path work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {}

std::vector<Image3d> ExternalInterpolator::between(const Image3d& key0, const Image3d& key1, int t0, int t1) {
  const fs::path dir = work_dir_ / ("interp_" + frame_name(t0, "") + "_" + frame_name(t1, ""));
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, dir.string(), ec.message());
  write_pfm(dir / "key0.pfm", key0);
  write_pfm(dir / "key1.pfm", key1);
  std::vector<int> frames;
  for (int t = t0 + 1; t < t1; ++t) frames.push_back(t);
  std::ofstream(dir / "meta.json") << nlohmann::json{{"t0", t0}, {"t1", t1}, {"frames", frames}}.dump() << "\n";

  const int status = detail::run_with_dir(command_, dir);
  if (status != 0)
    throw Error(ErrorKind::InterpolatorFailure, "interpolator", "command exited with status " + std::to_string(status));
  std::vector<Image3d> out;
  for (const int t : frames) {
    const fs::path p = dir / ("out_" + frame_name(t, "pfm"));
    if (!fs::exists(p)) throw Error(ErrorKind::InterpolatorFailure, p.filename().string(), "not produced");
    out.push_back(read_pfm(p));
  }
  return out;
}

std::unique_ptr<Interpolator> make_interpolator(const std::string& spec, const std::filesystem::path& work_dir) {
  if (spec == "crossfade") return std::make_unique<CrossFadeInterpolator>();
  if (spec.rfind("external:", 0) == 0) return std::make_unique<ExternalInterpolator>(spec.substr(9), work_dir);
  throw Error(ErrorKind::ConfigError, "interpolator", "unknown interpolator '" + spec + "'");
}

std::vector<Image3d> interpolate_shadow_frames(const std::vector<Image3d>& refined, int stride, Interpolator& interp) {
  const std::vector<int> keys = keyframes(static_cast<int>(refined.size()), stride);
  std::vector<Image3d> out(refined.size());
  for (const int k : keys) out[static_cast<std::size_t>(k)] = refined[static_cast<std::size_t>(k)];
  for (std::size_t j = 0; j + 1 < keys.size(); ++j) {
    const int t0 = keys[j], t1 = keys[j + 1];
    if (t1 - t0 < 2) continue;
    std::vector<Image3d> mid =
        interp.between(refined[static_cast<std::size_t>(t0)], refined[static_cast<std::size_t>(t1)], t0, t1);
    if (mid.size() != static_cast<std::size_t>(t1 - t0 - 1))
      throw Error(ErrorKind::InterpolatorFailure, interp.name(), "wrong number of in-between frames");
    for (int t = t0 + 1; t < t1; ++t) {
      Image3d& img = mid[static_cast<std::size_t>(t - t0 - 1)];
      if (img.rows() != refined[0].rows() || img.cols() != refined[0].cols() || !img.all_finite())
        throw Error(ErrorKind::InterpolatorFailure, interp.name(), "bad frame " + std::to_string(t));
      out[static_cast<std::size_t>(t)] = std::move(img);
    }
  }
  return out;
}

Image3d blend_final(const Planed& mask, const Image3d& rerender, const Image3d& interp) {
  if (mask.rows() != rerender.rows() || mask.cols() != rerender.cols() || interp.rows() != rerender.rows() ||
      interp.cols() != rerender.cols())
    throw Error(ErrorKind::DimensionMismatch, "blend_final");
  const Planed rest = 1.0 - mask;
  return mask * rerender + rest * interp;
}

}  // namespace gsplice
