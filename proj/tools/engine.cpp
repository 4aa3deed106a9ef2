#include "gsplice/api.hpp"
#include "gsplice/augmentation.hpp"
#include "gsplice/error.hpp"
#include "gsplice/pipeline.hpp"
#include "gsplice/synthetic.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace gsplice;

int do_run(const std::string& scene_dir, const std::string& stages, const std::string& config,
           const std::string& enhancer, const std::optional<std::uint64_t>& seed, const std::string& out,
           bool verbose) {
  RunOptions opts;
  opts.stages = parse_stages(stages);
  if (!config.empty()) opts.config_path = config;
  if (!enhancer.empty()) opts.enhancer = enhancer;
  opts.seed = seed;
  if (!out.empty()) opts.out_dir = out;
  opts.verbose = verbose;
  const PipelineRun run = run_pipeline(scene_dir, opts);
  for (const StageRecord& r : run.stages) {
    std::cout << to_string(r.stage) << ": " << to_string(r.status);
    if (!r.error.empty()) std::cout << " (" << r.error << ")";
    std::cout << "\n";
  }
  for (const std::string& w : run.warnings) std::cerr << "warning: " << w << "\n";
  return run.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Insert a Gaussian-splat object into a video scene"};
  app.require_subcommand(1);

  std::string scene_dir, stages, config, enhancer, out;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  auto* run = app.add_subcommand("run", "Run pipeline stages on a scene directory");
  run->add_option("scene_dir", scene_dir, "Scene directory")->required();
  run->add_option("--stages", stages, "Comma-separated subset of track,occlusion,preview,enhance,smooth,final");
  run->add_option("--config", config, "Config JSON overriding <scene>/config.json");
  run->add_option("--enhancer", enhancer, "identity | lambertian | external:<cmd>");
  run->add_option("--seed", seed, "RNG seed");
  run->add_option("--out", out, "Output directory (default <scene>/out)");
  run->add_flag("-v,--verbose", verbose, "Print stage timings to stderr");

  int port = 8080;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Serve the placement HTTP API");
  serve->add_option("scene_dir", scene_dir, "Scene directory")->required();
  serve->add_option("--port", port, "TCP port")->required();
  serve->add_option("--host", host, "Bind address");

  std::string aug_stage;
  int count = 0;
  std::uint64_t aug_seed = 0;
  auto* augment = app.add_subcommand("augment", "Emit training pairs for the shading enhancers");
  augment->add_option("scene_dir", scene_dir, "Scene directory")->required();
  augment->add_option("--stage", aug_stage, "relight | shadow")->required();
  augment->add_option("--count", count, "Number of pairs")->required()->check(CLI::NonNegativeNumber);
  augment->add_option("--seed", aug_seed, "RNG seed")->required();
  augment->add_option("--out", out, "Output directory (default <scene>/out)");

  SyntheticOptions synth_opts;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic test scene");
  synth->add_option("dir", synth_dir, "Destination directory")->required();
  synth->add_option("--frames", synth_opts.frames, "Frame count")->check(CLI::Range(1, 60));
  synth->add_option("--width", synth_opts.width, "Image width")->check(CLI::Range(32, 256));
  synth->add_option("--height", synth_opts.height, "Image height")->check(CLI::Range(32, 256));
  synth->add_option("--anchors", synth_opts.anchors, "Tracked anchor count")->check(CLI::PositiveNumber);
  synth->add_option("--noise", synth_opts.track_noise_px, "Track noise sigma in px");
  synth->add_option("--seed", synth_opts.seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return do_run(scene_dir, stages, config, enhancer, seed, out, verbose);
    if (*serve) {
      ApiService service(scene_dir);
      const int bound = service.bind(host, port);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      service.run();
      return 0;
    }
    if (*augment) {
      const Scene scene = load_scene(scene_dir);
      const fs::path dest = out.empty() ? fs::path(scene_dir) / "out" : fs::path(out);
      const auto written = emit_dataset(scene, augment_stage_from_string(aug_stage), count, aug_seed, dest);
      std::cout << written.size() << " pairs under " << (dest / "pairs" / aug_stage).string() << "\n";
      return 0;
    }
    if (*synth) {
      const SyntheticScene s = write_synthetic_scene(synth_dir, synth_opts);
      std::cout << s.scene.frame_count() << " frames written to " << synth_dir << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
