// File-based stage runners tying the generative, simulation, analysis, and
// control modules into one reproducible pipeline. Every stage reads its
// inputs from the output directory, writes its artifacts plus a provenance
// sidecar (config hash, seeds, input hashes), and is bit-deterministic for a
// fixed configuration.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gentact/avoidance.hpp"
#include "gentact/capacitance.hpp"
#include "gentact/characterize.hpp"
#include "gentact/config.hpp"
#include "gentact/layout.hpp"
#include "gentact/mesh.hpp"
#include "gentact/pss.hpp"
#include "gentact/routing.hpp"
#include "gentact/serialize.hpp"
#include "gentact/spline.hpp"

namespace gentact {

struct MissingArtifactError : std::runtime_error {
  std::string path;
  explicit MissingArtifactError(const std::string& expected_path)
      : std::runtime_error("missing artifact: " + expected_path),
        path(expected_path) {}
};

// Canonical artifact names inside the output directory.
namespace artifact {
inline constexpr const char* kDermisObj = "dermis.obj";
inline constexpr const char* kElectrodesJson = "electrodes.json";
inline constexpr const char* kWiresJson = "wires.json";
inline constexpr const char* kWiresObj = "wires.obj";
inline constexpr const char* kSkinReportJson = "skin_report.json";
inline constexpr const char* kCharacterizationJson = "characterization.json";
inline constexpr const char* kCharacterizationCsv = "characterization.csv";
inline constexpr const char* kEnsembleJson = "ensemble.json";
inline constexpr const char* kMetricsJson = "metrics.json";
inline constexpr const char* kGridJson = "pss_grid.json";
inline constexpr const char* kGridCsv = "pss_grid.csv";
inline constexpr const char* kAvoidLogCsv = "avoid_log.csv";
inline constexpr const char* kAvoidAblationCsv = "avoid_ablation.csv";
inline constexpr const char* kAvoidSummaryJson = "avoid_summary.json";

inline std::string trajectory_csv(const std::string& name) {
  return "trajectory_" + name + ".csv";
}
}  // namespace artifact

struct StageIo {
  PipelineConfig config;
  std::string out_dir = "out";
  std::ostream* log = nullptr;  // null silences stage summaries

  std::string path(const std::string& name) const { return out_dir + "/" + name; }

  // Paths in the config file are relative to the config's own directory.
  std::string resolve_input(const std::string& p) const {
    if (p.empty() || p.front() == '/') return p;
    return config.base_dir.empty() ? p : config.base_dir + "/" + p;
  }
};

namespace detail {

inline void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError(path);
}

inline nlohmann::json load_json_file(const std::string& path) {
  require_file(path);
  return nlohmann::json::parse(read_text_file(path));
}

// Sidecar naming the stage, the effective-config hash, the seeds the stage
// consumed, and a content hash per input file — enough to re-run the stage
// bit-identically. Deliberately carries no timestamps.
inline void write_sidecar(const StageIo& io, const std::string& artifact_name,
                          const std::string& stage, const ojson& seeds,
                          const std::vector<std::string>& input_names,
                          const ojson& parameters = ojson()) {
  ojson j;
  j["sidecar_version"] = 1;
  j["stage"] = stage;
  j["artifact"] = artifact_name;
  j["config_hash"] = config_hash(io.config);
  j["seeds"] = seeds;
  ojson inputs = ojson::object();
  for (const auto& name : input_names) inputs[name] = hash_file(io.path(name));
  j["inputs"] = inputs;
  if (!parameters.is_null()) j["parameters"] = parameters;
  write_text_file(io.path(artifact_name) + ".provenance.json", j.dump(2) + "\n");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generation (in-memory core, reusable without file I/O)

struct SkinBundle {
  SurfaceMesh region;
  DermisShell dermis;
  std::vector<Electrode> electrodes;
  PortPlacement ports;
  RouteResult routes;             // graph-node wire paths (for disjointness checks)
  std::vector<WireRecord> wires;  // serializable polylines, routed lengths
  std::vector<TubedWire> tubes;   // smoothed printable centerlines
  SkinUnit skin;
  double total_wire_length = 0.0;  // sum of smoothed wire lengths
  bool tangency_capped = false;    // an electrode radius was shrunk to avoid overlap
};

// Runs the full generative chain on an in-memory mesh: weighted-region
// extraction, dermis molding, Poisson-disk sensor distribution, nodule
// placement, layered routing-graph construction, port placement, greedy
// wire routing, and tube smoothing. The result carries both the printable
// geometry and the simulation-ready skin unit.
inline SkinBundle build_skin_bundle(const SurfaceMesh& mesh,
                                    const PipelineConfig& config) {
  const DesignParams& d = config.design;
  SkinBundle b;
  b.region = extract_weighted_region(mesh, d.region_threshold);
  b.dermis = mold_dermis(b.region, d.thickness);

  auto samples = poisson_disk_sample(b.dermis.outer, d.r_min,
                                     config.seeds.layout, d.max_attempts);
  if (samples.empty())
    throw EmptyRegionError("build_skin_bundle: no sensor sites fit the region");
  auto placement = place_nodules(samples, b.dermis, d.radius_scale, d.nodule_depth,
                                 d.min_radius, d.max_radius, d.link_frame);
  b.electrodes = placement.electrodes;
  b.tangency_capped = placement.tangency_capped;

  RoutingGraph graph =
      build_routing_graph(b.dermis, b.region.weights, d.route_layers, d.layer_gap,
                          d.connect_radius);
  bind_electrode_terminals(graph, b.electrodes);

  auto loops = boundary_loops(b.region);
  if (loops.empty())
    throw EmptyRegionError("build_skin_bundle: region has no boundary rim");
  std::vector<Vec3> rim;
  for (int v : loops.front()) rim.push_back(b.region.vertices[v]);
  auto smoothed_rim = smooth_boundary(rim, d.boundary_samples);
  b.ports = place_ports(smoothed_rim, d.port_count, graph);

  b.routes = route_all(graph, b.ports.ports, b.electrodes, d.a_mix,
                       d.effective_clearance());

  for (const auto& wire : b.routes.wires) {
    std::vector<Vec3> poly;
    for (int n : wire.node_sequence) poly.push_back(graph.nodes[n].pos);
    TubedWire tube = tube_wire(poly, d.profile_radius, d.smoothing_samples);
    b.total_wire_length += tube.length;
    b.wires.push_back({wire.port_id, wire.electrode_id, std::move(poly), wire.length,
                       d.profile_radius});
    b.tubes.push_back(std::move(tube));
  }

  b.skin.link_frame = d.link_frame;
  b.skin.origin = Mat4::identity();
  b.skin.samples_averaged = config.samples_averaged;
  b.skin.cycle_frequency = config.cycle_frequency;
  for (const auto& e : b.electrodes) {
    size_t wi = 0;
    while (wi < b.wires.size() && b.wires[wi].electrode_id != e.id) ++wi;
    if (wi == b.wires.size()) throw UnroutableError(e.id);
    SensorChannel s;
    s.electrode = e;
    s.wire_length = b.tubes[wi].length;
    s.resistance = wire_resistance(b.tubes[wi].length, d.resistance_per_meter,
                                   d.base_resistor);
    s.coupling = CouplingParams{config.coupling.area_scale * e.area,
                                config.coupling.w};
    s.coupling.validate();
    b.skin.sensors.push_back(std::move(s));
  }
  std::sort(b.skin.sensors.begin(), b.skin.sensors.end(),
            [](const SensorChannel& a, const SensorChannel& bch) {
              return a.electrode.id < bch.electrode.id;
            });
  return b;
}

// ---------------------------------------------------------------------------
// Stage: generate

inline SkinBundle run_generate(const StageIo& io) {
  std::string mesh_path = io.resolve_input(io.config.mesh);
  detail::require_file(mesh_path);
  SurfaceMesh mesh = load_mesh(mesh_path);
  SkinBundle bundle = build_skin_bundle(mesh, io.config);

  std::filesystem::create_directories(io.out_dir);
  save_mesh_obj(shell_closed_mesh(bundle.dermis), io.path(artifact::kDermisObj));
  write_text_file(io.path(artifact::kElectrodesJson),
                  electrodes_to_json(bundle.electrodes).dump(2) + "\n");
  write_text_file(io.path(artifact::kWiresJson),
                  wires_to_json(bundle.wires).dump(2) + "\n");
  write_text_file(io.path(artifact::kWiresObj), wires_to_obj(bundle.tubes));

  ojson report;
  report["sensor_count"] = bundle.skin.sensors.size();
  report["total_wire_length"] = bundle.total_wire_length;
  ojson rows = ojson::array();
  for (const auto& s : bundle.skin.sensors)
    rows.push_back(ojson{{"sensor_id", s.electrode.id},
                         {"radius", s.electrode.radius},
                         {"area", s.electrode.area},
                         {"wire_length", s.wire_length},
                         {"resistance", s.resistance},
                         {"coupling_k", s.coupling.k},
                         {"coupling_w", s.coupling.w}});
  report["sensors"] = rows;
  report["port_count"] = bundle.ports.ports.size();
  report["shared_port_node_warning"] = bundle.ports.shared_node_warning;
  report["tangency_capped"] = bundle.tangency_capped;
  report["skin"] = skin_to_json(bundle.skin);
  write_text_file(io.path(artifact::kSkinReportJson), report.dump(2) + "\n");

  ojson seeds{{"layout", io.config.seeds.layout}};
  std::string mesh_hash = fnv1a_hex(read_text_file(mesh_path));
  ojson params{{"mesh_path", io.config.mesh}, {"mesh_hash", mesh_hash}};
  for (const char* name : {artifact::kDermisObj, artifact::kElectrodesJson,
                           artifact::kWiresJson, artifact::kWiresObj,
                           artifact::kSkinReportJson})
    detail::write_sidecar(io, name, "generate", seeds, {}, params);

  if (io.log) {
    *io.log << "generate: " << bundle.skin.sensors.size()
            << " sensors, total wire length " << num_str(bundle.total_wire_length)
            << " m\n";
    for (const auto& s : bundle.skin.sensors)
      *io.log << "  sensor " << s.electrode.id << ": radius "
              << num_str(s.electrode.radius) << " m, wire "
              << num_str(s.wire_length) << " m, R " << num_str(s.resistance)
              << " ohm\n";
  }
  return bundle;
}

inline SkinUnit load_skin(const StageIo& io) {
  auto j = detail::load_json_file(io.path(artifact::kSkinReportJson));
  return skin_from_json(j.at("skin"));
}

// ---------------------------------------------------------------------------
// Stage: simulate

inline std::vector<TimedWaypoint> trajectory_waypoints(const StageIo& io,
                                                       const TrajectorySpec& spec) {
  if (!spec.waypoints.empty()) return spec.waypoints;
  std::string path = io.resolve_input(spec.waypoints_csv);
  detail::require_file(path);
  return waypoints_from_csv(read_text_file(path));
}

inline void run_simulate(const StageIo& io) {
  SkinUnit skin = load_skin(io);
  const auto& sim = io.config.simulate;
  Rng base(io.config.seeds.simulate);
  size_t total_frames = 0;
  for (size_t i = 0; i < sim.trajectories.size(); ++i) {
    const auto& spec = sim.trajectories[i];
    std::uint64_t seed = base.derive(static_cast<std::uint64_t>(i)).seed();
    auto waypoints = trajectory_waypoints(io, spec);
    auto frames = simulate_trajectory(skin, waypoints, sim.object_radius,
                                      io.config.environment, seed, sim.frame_rate);
    total_frames += frames.size();
    std::string name = artifact::trajectory_csv(spec.name);
    write_text_file(io.path(name), frames_to_csv(frames, skin.sensors.size()));

    ojson resistances = ojson::array();
    for (const auto& s : skin.sensors) resistances.push_back(s.resistance);
    ojson env{{"c_env", io.config.environment.c_env},
              {"drift_rate", io.config.environment.drift_rate},
              {"noise_sigma", io.config.environment.noise_sigma},
              {"parasitic_gain", io.config.environment.parasitic_gain},
              {"parasitic_decay", io.config.environment.parasitic_decay}};
    ojson params{{"trajectory", spec.name},
                 {"role", spec.role},
                 {"frame_rate", sim.frame_rate},
                 {"object_radius", sim.object_radius},
                 {"circuit", ojson{{"samples_averaged", skin.samples_averaged},
                                   {"cycle_frequency", skin.cycle_frequency},
                                   {"resistances", resistances}}},
                 {"environment", env}};
    detail::write_sidecar(io, name, "simulate", ojson{{"trajectory_seed", seed}},
                          {artifact::kSkinReportJson}, params);
  }
  if (io.log)
    *io.log << "simulate: wrote " << sim.trajectories.size() << " recordings ("
            << total_frames << " frames)\n";
}

// ---------------------------------------------------------------------------
// Stage: characterize

inline std::vector<std::string> recordings_with_role(const PipelineConfig& config,
                                                     const std::string& role) {
  std::vector<std::string> names;
  for (const auto& t : config.simulate.trajectories)
    if (t.role == role) names.push_back(artifact::trajectory_csv(t.name));
  return names;
}

inline void run_characterize(const StageIo& io) {
  SkinUnit skin = load_skin(io);
  auto names = recordings_with_role(io.config, "characterize");
  if (names.empty())
    throw MissingArtifactError(io.path(artifact::trajectory_csv("<characterize>")) +
                               " (no recording with role \"characterize\")");

  // With several recordings, each sensor keeps the analysis from the
  // recording that excited it hardest (highest max SNR).
  std::optional<CharacterizationReport> merged;
  for (const auto& name : names) {
    detail::require_file(io.path(name));
    auto frames = frames_from_csv(read_text_file(io.path(name)));
    auto report = characterize_skin(skin, frames, io.config.characterize);
    if (!merged) {
      merged = report;
      continue;
    }
    for (size_t i = 0; i < report.sensors.size(); ++i)
      if (report.sensors[i].max_snr > merged->sensors[i].max_snr)
        merged->sensors[i] = report.sensors[i];
  }

  write_text_file(io.path(artifact::kCharacterizationJson),
                  characterization_to_json(*merged).dump(2) + "\n");
  write_text_file(io.path(artifact::kCharacterizationCsv),
                  characterization_to_csv(*merged));
  std::vector<std::string> inputs = names;
  inputs.push_back(artifact::kSkinReportJson);
  for (const char* name :
       {artifact::kCharacterizationJson, artifact::kCharacterizationCsv})
    detail::write_sidecar(io, name, "characterize", ojson::object(), inputs);

  if (io.log) {
    *io.log << "characterize: " << merged->sensors.size() << " sensors\n";
    for (const auto& sc : merged->sensors) {
      *io.log << "  sensor " << sc.sensor_id << ": max SNR " << num_str(sc.max_snr)
              << ", detection range ";
      if (sc.detection_range_m)
        *io.log << num_str(*sc.detection_range_m) << " m\n";
      else
        *io.log << "none\n";
    }
  }
}

inline CharacterizationReport load_characterization(const StageIo& io) {
  return characterization_from_json(
      detail::load_json_file(io.path(artifact::kCharacterizationJson)));
}

// Everything beyond the farthest per-sensor detection range counts as
// outside the observable shell.
inline double max_detection_range(const CharacterizationReport& report) {
  double limit = 0.0;
  for (const auto& sc : report.sensors)
    if (sc.detection_range_m) limit = std::max(limit, *sc.detection_range_m);
  return limit;
}

// ---------------------------------------------------------------------------
// Stage: train

inline void run_train(const StageIo& io) {
  SkinUnit skin = load_skin(io);
  auto names = recordings_with_role(io.config, "train");
  if (names.empty())
    throw MissingArtifactError(io.path(artifact::trajectory_csv("<train>")) +
                               " (no recording with role \"train\")");
  std::vector<std::vector<CapacitanceFrame>> trajectories;
  for (const auto& name : names) {
    detail::require_file(io.path(name));
    trajectories.push_back(frames_from_csv(read_text_file(io.path(name))));
  }
  CharacterizationReport characterization = load_characterization(io);

  DatasetConfig dcfg;
  dcfg.baseline_window_s = io.config.dataset.baseline_window_s;
  dcfg.train_fraction = io.config.dataset.train_fraction;
  dcfg.validation_fraction = io.config.dataset.validation_fraction;
  dcfg.feature_scale = io.config.dataset.feature_scale;
  dcfg.origin = skin.origin;
  PssDataset dataset =
      prepare_dataset(skin, trajectories, io.config.seeds.dataset, dcfg);

  Ensemble ensemble =
      train_ensemble(dataset.train, io.config.ensemble, io.config.seeds.train);
  ensemble.origin_frame = skin.link_frame;
  ensemble.feature_min = dataset.feature_min;
  ensemble.feature_max = dataset.feature_max;
  Calibration cal = calibrate_uncertainty(ensemble, dataset.validation);

  std::vector<Vec3> centers;
  for (const auto& s : skin.sensors) centers.push_back(s.electrode.center);
  TestMetrics metrics = evaluate_on_test(ensemble, dataset.test, centers);
  double range_limit = max_detection_range(characterization);
  RangeSplitMedians medians = median_error_by_range(metrics, range_limit);

  write_text_file(io.path(artifact::kEnsembleJson),
                  ensemble_to_json(ensemble).dump() + "\n");
  ojson mj = metrics_to_json(metrics, range_limit, medians);
  mj["calibration"] = ojson{{"a", cal.a},
                            {"b", cal.b},
                            {"pearson_r", cal.pearson_r}};
  mj["split"] = ojson{{"train", dataset.train_trajectories},
                      {"validation", dataset.validation_trajectories},
                      {"test", dataset.test_trajectories}};
  write_text_file(io.path(artifact::kMetricsJson), mj.dump(2) + "\n");

  std::vector<std::string> inputs = names;
  inputs.push_back(artifact::kSkinReportJson);
  inputs.push_back(artifact::kCharacterizationJson);
  ojson seeds{{"dataset", io.config.seeds.dataset}, {"train", io.config.seeds.train}};
  for (const char* name : {artifact::kEnsembleJson, artifact::kMetricsJson})
    detail::write_sidecar(io, name, "train", seeds, inputs);

  if (io.log)
    *io.log << "train: " << ensemble.members.size()
            << " members; validation calibration r " << num_str(cal.pearson_r)
            << "; test error/uncertainty r " << num_str(metrics.pearson_error_sigma)
            << "\n";
}

inline Ensemble load_ensemble(const StageIo& io) {
  return ensemble_from_json(detail::load_json_file(io.path(artifact::kEnsembleJson)));
}

// ---------------------------------------------------------------------------
// Stage: map

inline void run_map(const StageIo& io) {
  Ensemble ensemble = load_ensemble(io);
  if (!ensemble.calibration.valid)
    throw NotCalibratedError(
        "map: the stored ensemble has no uncertainty calibration; run the train "
        "stage (which calibrates on the validation split) before mapping");
  PssGrid grid = map_pss(ensemble, io.config.map, io.config.seeds.map);

  write_text_file(io.path(artifact::kGridJson), grid_to_json(grid).dump() + "\n");
  write_text_file(io.path(artifact::kGridCsv), grid_to_csv(grid));
  ojson seeds{{"map", io.config.seeds.map}};
  for (const char* name : {artifact::kGridJson, artifact::kGridCsv})
    detail::write_sidecar(io, name, "map", seeds, {artifact::kEnsembleJson});

  if (io.log) {
    int populated = 0;
    for (const auto& c : grid.cells) populated += c.count > 0;
    *io.log << "map: " << grid.nx << "x" << grid.ny << "x" << grid.nz << " grid, "
            << populated << " populated cells, " << grid.out_of_extent
            << " samples out of extent\n";
  }
}

// ---------------------------------------------------------------------------
// Stage: avoid

struct AvoidOutcome {
  ScenarioLog with_avoidance;
  ScenarioLog ablation;
  double post_removal_deviation = std::numeric_limits<double>::quiet_NaN();
};

// Paired closed-loop runs sharing one seed: the control law is the only
// difference, so clearance/speed comparisons isolate the avoidance term.
inline AvoidOutcome run_avoid_scenarios(const SkinUnit& skin,
                                        const EnvironmentModel& env,
                                        const std::vector<PowerLawFit>& fits,
                                        const AvoidParams& params,
                                        std::uint64_t seed) {
  AvoidOutcome out;
  out.with_avoidance = run_circle_scenario(skin, env, fits, params.scenario(true), seed);
  out.ablation = run_circle_scenario(skin, env, fits, params.scenario(false), seed);
  if (!params.intruders.empty()) {
    double last_end = 0.0;
    for (const auto& ev : params.intruders) last_end = std::max(last_end, ev.t_end);
    double resume_t = last_end + params.period_s;
    double worst = 0.0;
    bool any = false;
    for (const auto& f : out.with_avoidance.frames)
      if (f.t >= resume_t) {
        worst = std::max(worst, distance(f.actual, f.desired));
        any = true;
      }
    if (any) out.post_removal_deviation = worst;
  }
  return out;
}

inline void run_avoid(const StageIo& io) {
  SkinUnit skin = load_skin(io);
  CharacterizationReport characterization = load_characterization(io);
  std::vector<PowerLawFit> fits;
  for (const auto& sc : characterization.sensors) fits.push_back(sc.fit);

  AvoidOutcome outcome = run_avoid_scenarios(skin, io.config.environment, fits,
                                             io.config.avoid, io.config.seeds.avoid);

  write_text_file(io.path(artifact::kAvoidLogCsv),
                  scenario_to_csv(outcome.with_avoidance));
  write_text_file(io.path(artifact::kAvoidAblationCsv),
                  scenario_to_csv(outcome.ablation));

  auto finite_or_null = [](double v) {
    return std::isfinite(v) ? ojson(v) : ojson(nullptr);
  };
  ojson j;
  j["cruise_speed"] = outcome.with_avoidance.cruise_speed;
  j["intruders"] = io.config.avoid.intruders.size();
  j["avoidance"] =
      ojson{{"min_clearance", finite_or_null(outcome.with_avoidance.min_clearance)},
            {"min_speed_during_intrusion",
             finite_or_null(outcome.with_avoidance.min_speed_during_intrusion)},
            {"post_removal_deviation", finite_or_null(outcome.post_removal_deviation)}};
  j["ablation"] =
      ojson{{"min_clearance", finite_or_null(outcome.ablation.min_clearance)}};
  write_text_file(io.path(artifact::kAvoidSummaryJson), j.dump(2) + "\n");

  ojson seeds{{"avoid", io.config.seeds.avoid}};
  for (const char* name : {artifact::kAvoidLogCsv, artifact::kAvoidAblationCsv,
                           artifact::kAvoidSummaryJson})
    detail::write_sidecar(io, name, "avoid", seeds,
                          {artifact::kSkinReportJson,
                           artifact::kCharacterizationJson});

  if (io.log) {
    *io.log << "avoid: min clearance " << num_str(outcome.with_avoidance.min_clearance)
            << " m with avoidance vs " << num_str(outcome.ablation.min_clearance)
            << " m without";
    if (std::isfinite(outcome.post_removal_deviation))
      *io.log << "; post-removal deviation "
              << num_str(outcome.post_removal_deviation) << " m";
    *io.log << "\n";
  }
}

// ---------------------------------------------------------------------------
// Full pipeline

inline void run_pipeline(const StageIo& io) {
  run_generate(io);
  run_simulate(io);
  run_characterize(io);
  run_train(io);
  run_map(io);
  run_avoid(io);
}

}  // namespace gentact
