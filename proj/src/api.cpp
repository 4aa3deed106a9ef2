#include "gsplice/api.hpp"
#include "gsplice/error.hpp"
#include "gsplice/occlusion.hpp"
#include "gsplice/pose_tracking.hpp"

#include <httplib.h>

#include <cmath>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <thread>

namespace gsplice {

using nlohmann::json;

namespace {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return 404;
    case ErrorKind::DimensionMismatch:
    case ErrorKind::ValueOutOfRange:
    case ErrorKind::ParseError:
    case ErrorKind::MissingField:
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidDepth: return 400;
    case ErrorKind::Degenerate:
    case ErrorKind::DegenerateDepth:
    case ErrorKind::EmptyMask: return 422;
    default: return 500;
  }
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message, const std::string& kind = "request") {
  reply_json(res, status, {{"error", message}, {"kind", kind}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorKind::ParseError, "body", "expected a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, "body", e.what());
  }
}

struct Solved {
  std::vector<PoseRecord> poses;
  std::vector<std::string> warnings;
  AnchorSet3D anchors3d;
  std::vector<std::size_t> track_ids;
  PlacementState placement;
};

}  // namespace

struct ApiService::Impl {
  Scene scene;
  PlacementState state;
  std::optional<Solved> solved;
  mutable std::shared_mutex mutex;
  httplib::Server server;
  std::thread worker;
  int port = -1;

  explicit Impl(Scene s) : scene(std::move(s)) {
    if (auto saved = load_placement_state(scene.dir / "placement.json")) {
      state = *saved;
    } else {
      state.pose = scene.config.placement.pose;
      state.scale = scene.config.placement.scale;
    }
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
  }

  fs::path checkpoint_path() const { return scene.dir / "placement.json"; }

  std::size_t frame_index(const httplib::Request& req) const {
    const long t = std::stol(req.matches[1]);
    if (t < 0 || static_cast<std::size_t>(t) >= scene.frame_count())
      throw Error(ErrorKind::MissingFile, "frame " + std::to_string(t), "no such frame");
    return static_cast<std::size_t>(t);
  }

  void guard(httplib::Response& res, const std::function<void()>& body) {
    try {
      body();
    } catch (const Error& e) {
      reply_json(res, http_status(e.kind()),
                 {{"error", e.what()}, {"kind", to_string(e.kind())}, {"subject", e.subject()}});
    } catch (const std::logic_error& e) {
      reply_error(res, 400, e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, e.what(), "internal");
    }
  }

  json status_json() const {
    json j;
    j["frames"] = scene.frame_count();
    j["width"] = scene.camera.width;
    j["height"] = scene.camera.height;
    j["intrinsics"] = {{"fx", scene.camera.fx}, {"fy", scene.camera.fy}, {"cx", scene.camera.cx}, {"cy", scene.camera.cy}};
    j["placement"] = placement_to_json(state);
    j["min_anchors"] = scene.config.pnp_min_points;
    j["solved"] = solved.has_value();
    json residuals = json::array();
    json warnings = json::array();
    if (solved) {
      for (const PoseRecord& r : solved->poses) residuals.push_back(r.rms_px);
      for (const std::string& w : solved->warnings) warnings.push_back(w);
    }
    j["residuals"] = residuals;
    j["warnings"] = warnings;
    return j;
  }

  Image3d preview(std::size_t t) const {
    PlacementState placement;
    Posed pose;
    double s = 1.0;
    {
      std::shared_lock lock(mutex);
      placement = state;
      pose = state.pose;
      if (solved) pose = solved->poses[t].pose;
      if (solved && t > 0) {
        std::vector<Eigen::Vector2d> px;
        std::vector<Eigen::Vector3d> xs;
        for (std::size_t j = 0; j < solved->track_ids.size(); ++j)
          if (scene.tracks.visible[t][solved->track_ids[j]]) {
            px.push_back(scene.tracks.points[t][solved->track_ids[j]]);
            xs.push_back(solved->anchors3d[j]);
          }
        try {
          s = align_depth_scale(scene.depth[t], px, xs, pose);
        } catch (const Error&) {
          s = 1.0;
        }
      }
    }
    const SplatModel model = placement.scale == 1.0 ? scene.splats : scaled(scene.splats, placement.scale);
    const RenderOutput r = render(model, scene.camera, pose);
    const DepthMap object_depth{r.depth, r.alpha > 0.0};
    const OcclusionMask occ = make_occlusion(scene.depth[t], object_depth, s, scene.config.occlusion_sigma);
    const Frame object{r.unpremultiplied(), ColorSpace::sRGB, static_cast<int>(t)};
    return composite_preview(scene.frames[t], object, r.alpha, occ.soft).pixels;
  }

  void mutate(httplib::Response& res, const std::function<void(PlacementState&)>& edit) {
    std::unique_lock lock(mutex);
    if (state.locked) {
      reply_error(res, 409, "placement is locked", "locked");
      return;
    }
    PlacementState next = state;
    edit(next);
    save_placement_state(checkpoint_path(), next);
    state = std::move(next);
    solved.reset();
    reply_json(res, 200, status_json());
  }

  void routes() {
    server.Get(R"(/frame/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const std::size_t t = frame_index(req);
        const std::vector<unsigned char> png = encode_png(scene.frames[t].pixels);
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      });
    });

    server.Get(R"(/preview/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const std::vector<unsigned char> png = encode_png(preview(frame_index(req)));
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      });
    });

    server.Get(R"(/depth/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const std::size_t t = frame_index(req);
        const DepthMap& d = scene.depth[t];
        if (!req.has_param("u") && !req.has_param("v")) {
          res.set_content(encode_pfm(d.depth), "application/x-pfm");
          return;
        }
        if (!req.has_param("u") || !req.has_param("v"))
          throw Error(ErrorKind::MissingField, "u/v", "both coordinates are required");
        const Eigen::Vector2d px(std::stod(req.get_param_value("u")), std::stod(req.get_param_value("v")));
        if (!px.allFinite() || !scene.camera.contains(px))
          throw Error(ErrorKind::ValueOutOfRange, "u/v", "outside the image");
        const double z = sample_depth(d, px);
        reply_json(res, 200, {{"u", px.x()}, {"v", px.y()}, {"depth", z}, {"valid", z > 0}});
      });
    });

    server.Post("/pose", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const json body = parse_body(req);
        for (auto it = body.begin(); it != body.end(); ++it)
          if (it.key() != "q" && it.key() != "T" && it.key() != "scale")
            throw Error(ErrorKind::ParseError, it.key(), "unknown key");
        mutate(res, [&](PlacementState& s) {
          json pose = pose_to_json(s.pose);
          if (body.contains("q")) pose["q"] = body.at("q");
          if (body.contains("T")) pose["T"] = body.at("T");
          Posed p;
          try {
            p = pose_from_json(pose);
          } catch (const json::exception& e) {
            throw Error(ErrorKind::ParseError, "pose", e.what());
          }
          if (!p.finite()) throw Error(ErrorKind::ValueOutOfRange, "pose", "must be finite");
          double scale = s.scale;
          if (body.contains("scale")) {
            if (!body.at("scale").is_number()) throw Error(ErrorKind::ParseError, "scale", "expected a number");
            scale = body.at("scale").get<double>();
          }
          if (!(scale > 0) || !std::isfinite(scale)) throw Error(ErrorKind::ValueOutOfRange, "scale", "must be > 0");
          s.pose = p;
          s.scale = scale;
        });
      });
    });

    server.Post("/anchors", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] {
        const json body = parse_body(req);
        if (!body.contains("points") || !body.at("points").is_array())
          throw Error(ErrorKind::MissingField, "points", "expected an array of [u, v]");
        std::vector<Eigen::Vector2d> pts;
        for (const json& p : body.at("points")) {
          if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
            throw Error(ErrorKind::ParseError, "points", "each point is [u, v]");
          const Eigen::Vector2d px(p[0].get<double>(), p[1].get<double>());
          if (!px.allFinite() || !scene.camera.contains(px))
            throw Error(ErrorKind::ValueOutOfRange, "points", "anchor outside the image");
          pts.push_back(px);
        }
        mutate(res, [&](PlacementState& s) { s.anchors = std::move(pts); });
      });
    });

    server.Post("/solve", [this](const httplib::Request&, httplib::Response& res) {
      guard(res, [&] {
        std::unique_lock lock(mutex);
        const int need = scene.config.pnp_min_points;
        if (static_cast<int>(state.anchors.size()) < need) {
          reply_error(res, 409, "need ≥ " + std::to_string(need) + " anchors", "precondition");
          return;
        }
        Solved out;
        out.placement = state;
        out.track_ids = select_tracks(scene, state);
        const TrackingResult tr =
            track_object(scene.tracks, out.track_ids, scene.depth[0], scene.camera, state.pose, scene.config);
        std::vector<Eigen::Vector2d> first;
        for (const std::size_t id : out.track_ids) first.push_back(scene.tracks.points[0][id]);
        out.anchors3d = lift_points(first, scene.depth[0], scene.camera, state.pose);
        out.poses = tr.poses;
        out.warnings = tr.warnings;
        solved = std::move(out);
        reply_json(res, 200, status_json());
      });
    });

    server.Post("/lock", [this](const httplib::Request&, httplib::Response& res) {
      guard(res, [&] {
        std::unique_lock lock(mutex);
        if (!state.locked) {
          PlacementState next = state;
          next.locked = true;
          save_placement_state(checkpoint_path(), next);
          state = std::move(next);
        }
        reply_json(res, 200, status_json());
      });
    });

    server.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      guard(res, [&] {
        std::shared_lock lock(mutex);
        reply_json(res, 200, status_json());
      });
    });

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply_error(res, res.status, httplib::status_message(res.status));
    });
  }
};

ApiService::ApiService(const fs::path& scene_dir) : ApiService(load_scene(scene_dir)) {}

ApiService::ApiService(Scene scene) : impl_(std::make_unique<Impl>(std::move(scene))) {}

ApiService::~ApiService() { stop(); }

int ApiService::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
    if (impl_->port < 0) throw Error(ErrorKind::IoError, host, "cannot bind any port");
  } else {
    if (!impl_->server.bind_to_port(host, port))
      throw Error(ErrorKind::IoError, "port " + std::to_string(port), "already in use or not bindable");
    impl_->port = port;
  }
  return impl_->port;
}

void ApiService::run() {
  if (impl_->port < 0) throw Error(ErrorKind::IoError, "server", "bind() first");
  impl_->server.listen_after_bind();
}

void ApiService::start() {
  if (impl_->port < 0) throw Error(ErrorKind::IoError, "server", "bind() first");
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ApiService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

int ApiService::port() const { return impl_->port; }

PlacementState ApiService::placement() const {
  std::shared_lock lock(impl_->mutex);
  return impl_->state;
}

void serve_api(const fs::path& scene_dir, int port, const std::string& host) {
  ApiService service(scene_dir);
  service.bind(host, port);
  service.run();
}

}  // namespace gsplice
