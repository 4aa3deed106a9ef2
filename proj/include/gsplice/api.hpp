#pragma once

#include "gsplice/pipeline.hpp"
#include "gsplice/scene_io.hpp"

#include <memory>
#include <string>

namespace gsplice {

/// HTTP service behind the placement workflow.
///
///   GET  /frame/{t}              PNG of input frame t
///   GET  /preview/{t}            PNG composite at the current placement (or solved pose)
///   GET  /depth/{t}              single-channel PFM; with ?u=&v= a JSON sample instead
///   POST /pose    {q, T, scale}  absolute placement; omitted fields keep their value
///   POST /anchors {points}       frame-0 anchor pixels
///   POST /solve                 tracks every frame from the current placement
///   POST /lock                  freezes the placement for pipeline runs
///   GET  /status                 placement, anchors, per-frame residuals
///
/// Every mutation is written to <scene>/placement.json before the reply.
class ApiService {
 public:
  explicit ApiService(const fs::path& scene_dir);
  /// `scene.dir` is where placement.json is checkpointed.
  explicit ApiService(Scene scene);
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  /// Port 0 picks a free port. Error(IoError) when the port is taken.
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires bind().
  void run();
  /// run() on a background thread; returns once the server accepts connections.
  void start();
  void stop();
  int port() const;

  PlacementState placement() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking: load, bind to 127.0.0.1:port and serve.
void serve_api(const fs::path& scene_dir, int port, const std::string& host = "127.0.0.1");

}  // namespace gsplice
