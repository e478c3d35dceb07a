// Command-line entry point: runs the skin-generation, simulation, analysis,
// and avoidance stages individually or as one pipeline, with file-based
// handoff through the output directory. Exit code 0 means every stage
// postcondition held.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "gentact/config.hpp"
#include "gentact/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool quiet = false;
};

int run_stage(const std::string& stage, const CliOptions& opts) {
  try {
    gentact::StageIo io;
    io.config = gentact::load_config(opts.config_path);
    if (opts.seed_given) gentact::apply_seed_override(io.config, opts.seed);
    io.out_dir = opts.out_dir;
    io.log = opts.quiet ? nullptr : &std::cout;
    std::filesystem::create_directories(io.out_dir);

    if (stage == "generate")
      gentact::run_generate(io);
    else if (stage == "simulate")
      gentact::run_simulate(io);
    else if (stage == "characterize")
      gentact::run_characterize(io);
    else if (stage == "train")
      gentact::run_train(io);
    else if (stage == "map")
      gentact::run_map(io);
    else if (stage == "avoid")
      gentact::run_avoid(io);
    else if (stage == "pipeline")
      gentact::run_pipeline(io);
    else
      throw std::logic_error("unknown stage: " + stage);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "gentact: procedural capacitive skin units, sensor simulation, "
      "characterization, perisensory mapping, and reactive avoidance"};
  app.require_subcommand(1);

  CliOptions opts;
  app.add_option("--config", opts.config_path, "pipeline configuration JSON")
      ->required();
  auto* seed_opt =
      app.add_option("--seed", opts.seed,
                     "override every stage seed, derived from this one value");
  app.add_option("--out", opts.out_dir, "artifact output directory")
      ->capture_default_str();
  app.add_flag("--quiet", opts.quiet, "suppress stage summaries");

  const char* stages[] = {"generate",  "simulate", "characterize", "train",
                          "map",       "avoid",    "pipeline"};
  const char* descriptions[] = {
      "mold the dermis, place sensors, route wires, write the skin bundle",
      "record simulated sensor counts along the configured trajectories",
      "fit per-sensor signal curves, noise baselines, and detection ranges",
      "train the bootstrap regression ensemble and calibrate its uncertainty",
      "project calibrated uncertainty onto the volumetric perisensory grid",
      "run the paired reactive-avoidance scenario and write motion logs",
      "run every stage in order"};
  for (int i = 0; i < 7; ++i) {
    auto* sub = app.add_subcommand(stages[i], descriptions[i]);
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);
  opts.seed_given = seed_opt->count() > 0;
  return run_stage(app.get_subcommands().front()->get_name(), opts);
}
