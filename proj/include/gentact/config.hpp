// Versioned pipeline configuration: strict JSON loading (unknown fields are
// rejected by name), field-level validation, explicit per-stage seeds, and a
// canonical re-serialization used for provenance hashing.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gentact/avoidance.hpp"
#include "gentact/capacitance.hpp"
#include "gentact/characterize.hpp"
#include "gentact/pss.hpp"
#include "gentact/rng.hpp"
#include "gentact/serialize.hpp"

#include <nlohmann/json.hpp>

namespace gentact {

inline constexpr int kConfigSchemaVersion = 1;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Wraps one JSON object and tracks key consumption so that anything left
// over is reported as an unknown field with its full dotted path.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError(path_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& require(const std::string& key) {
    if (!j_.contains(key))
      throw ConfigError("missing required field: " + dotted(key));
    seen_.insert(key);
    return j_.at(key);
  }

  const nlohmann::json* take(const std::string& key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  double number(const std::string& key, double fallback) {
    const auto* v = take(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(dotted(key) + " must be a number");
    return v->get<double>();
  }

  double require_number(const std::string& key) {
    const auto& v = require(key);
    if (!v.is_number()) throw ConfigError(dotted(key) + " must be a number");
    return v.get<double>();
  }

  int integer(const std::string& key, int fallback) {
    const auto* v = take(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) throw ConfigError(dotted(key) + " must be an integer");
    return v->get<int>();
  }

  std::uint64_t require_u64(const std::string& key) {
    const auto& v = require(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<double>() < 0))
      throw ConfigError(dotted(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const auto* v = take(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(dotted(key) + " must be a boolean");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const auto* v = take(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(dotted(key) + " must be a string");
    return v->get<std::string>();
  }

  std::string require_text(const std::string& key) {
    const auto& v = require(key);
    if (!v.is_string()) throw ConfigError(dotted(key) + " must be a string");
    return v.get<std::string>();
  }

  std::string dotted(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Every key must have been consumed; names the first leftover.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("unknown field: " + dotted(it.key()));
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Vec3 vec3_field(const nlohmann::json& j, const std::string& dotted) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(dotted + " must be an [x, y, z] array");
  for (const auto& v : j)
    if (!v.is_number()) throw ConfigError(dotted + " must contain numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

// Geometry and routing knobs for the procedural generation stage.
struct DesignParams {
  double region_threshold = 0.5;    // per-vertex weight cut for the skin region
  double thickness = 0.005;         // dermis extrusion, m
  double r_min = 0.02;              // Poisson-disk minimum spacing, m
  int max_attempts = 10000;         // dart-throwing rejection budget
  double radius_scale = 0.4;        // electrode radius vs nearest neighbor
  double nodule_depth = 0.001;      // electrode inset below the outer surface, m
  double min_radius = 0.0;          // electrode radius clamp, m
  double max_radius = 0.02;
  int route_layers = 2;             // routing-graph layers inside the dermis
  double layer_gap = 0.001;         // per-layer normal offset, m
  double connect_radius = 0.02;     // graph edge radius, m
  int port_count = 8;               // connection ports along the rim
  double a_mix = 0.7;               // wire scoring: 1 = shortest, 0 = bundled
  double clearance = -1.0;          // edge pruning radius; < 0 = 2 x profile_radius
  double profile_radius = 0.001;    // printed wire tube radius, m
  int smoothing_samples = 8;        // spline samples per wire segment
  int boundary_samples = 8;         // spline samples per rim segment
  double resistance_per_meter = 40000.0;  // conductive trace, ohm/m
  double base_resistor = 1e6;             // set resistor, ohm
  std::string link_frame = "world";

  double effective_clearance() const {
    return clearance < 0.0 ? 2.0 * profile_radius : clearance;
  }
};

// Generative coupling law assigned to every sensor: k = area_scale x area.
struct CouplingModel {
  double area_scale = 1e-9;  // F / m^2, scaled by electrode area into k
  double w = 0.7;            // shared distance exponent
};

struct TrajectorySpec {
  std::string name;
  std::string role = "train";  // "train" (dataset) or "characterize" (sweep)
  std::vector<TimedWaypoint> waypoints;
  std::string waypoints_csv;  // alternative to inline waypoints
};

struct SimulateParams {
  double frame_rate = 20.0;
  double object_radius = 0.0125;
  std::vector<TrajectorySpec> trajectories;
};

struct StageSeeds {
  std::uint64_t layout = 0;
  std::uint64_t simulate = 0;
  std::uint64_t dataset = 0;
  std::uint64_t train = 0;
  std::uint64_t map = 0;
  std::uint64_t avoid = 0;
};

struct DatasetParams {
  double baseline_window_s = 2.0;
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
  double feature_scale = 1e12;
};

struct AvoidParams {
  Vec3 center{0.0, 0.0, 0.2};
  double radius = 0.10;
  double period_s = 8.0;
  double duration_s = 20.0;
  double dt = 0.05;
  double track_gain = 2.0;
  double calibration_s = 2.0;
  double drift_timescale_s = 60.0;
  double object_radius = 0.0125;
  AvoidanceGains gains;
  std::vector<IntruderEvent> intruders;

  CircleScenarioConfig scenario(bool avoidance_enabled) const {
    CircleScenarioConfig c;
    c.center = center;
    c.radius = radius;
    c.period_s = period_s;
    c.duration_s = duration_s;
    c.dt = dt;
    c.track_gain = track_gain;
    c.calibration_s = calibration_s;
    c.drift_timescale_s = drift_timescale_s;
    c.object_radius = object_radius;
    c.avoidance_enabled = avoidance_enabled;
    c.gains = gains;
    c.intruders = intruders;
    return c;
  }
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  std::string mesh;  // path, relative to the config file's directory
  StageSeeds seeds;
  DesignParams design;
  int samples_averaged = 16;      // circuit n
  double cycle_frequency = 1e6;   // circuit f, Hz
  CouplingModel coupling;
  EnvironmentModel environment;
  SimulateParams simulate;
  CharacterizeConfig characterize;
  DatasetParams dataset;
  EnsembleConfig ensemble;
  PssMapConfig map;
  AvoidParams avoid;

  std::string base_dir;  // directory of the loaded file; not part of the schema
};

namespace detail {

inline void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace detail

// Range checks with field-naming messages. Separated from parsing so that
// programmatically built configs get the same diagnostics.
inline void validate_config(const PipelineConfig& c) {
  using detail::check;
  check(c.schema_version == kConfigSchemaVersion,
        "schema_version must be " + std::to_string(kConfigSchemaVersion));
  check(!c.mesh.empty(), "mesh must name a mesh file");

  const auto& d = c.design;
  check(d.region_threshold > 0.0 && d.region_threshold <= 1.0,
        "design.region_threshold must be in (0, 1]");
  check(d.thickness > 0.0, "design.thickness must be > 0");
  check(d.r_min > 0.0, "design.r_min must be > 0");
  check(d.max_attempts >= 1, "design.max_attempts must be >= 1");
  check(d.radius_scale > 0.0 && d.radius_scale <= 0.5,
        "design.radius_scale must be in (0, 0.5]");
  check(d.nodule_depth >= 0.0 && d.nodule_depth < d.thickness,
        "design.nodule_depth must be in [0, design.thickness)");
  check(d.min_radius >= 0.0 && d.max_radius >= d.min_radius,
        "design.min_radius/max_radius must satisfy 0 <= min <= max");
  check(d.route_layers >= 1, "design.route_layers must be >= 1");
  check(d.layer_gap > 0.0, "design.layer_gap must be > 0");
  check(d.route_layers * d.layer_gap < d.thickness,
        "design.route_layers x design.layer_gap must fit inside design.thickness");
  check(d.connect_radius > 0.0, "design.connect_radius must be > 0");
  check(d.port_count >= 1, "design.port_count must be >= 1");
  check(d.a_mix >= 0.0 && d.a_mix <= 1.0, "design.a_mix must be in [0, 1]");
  check(d.profile_radius > 0.0, "design.profile_radius must be > 0");
  check(d.smoothing_samples >= 2, "design.smoothing_samples must be >= 2");
  check(d.boundary_samples >= 1, "design.boundary_samples must be >= 1");
  check(d.resistance_per_meter >= 0.0, "design.resistance_per_meter must be >= 0");
  check(d.base_resistor >= 0.0, "design.base_resistor must be >= 0");

  check(c.samples_averaged >= 1, "circuit.samples_averaged must be >= 1");
  check(c.cycle_frequency > 0.0, "circuit.cycle_frequency must be > 0");
  check(c.coupling.area_scale > 0.0, "coupling.area_scale must be > 0");
  check(c.coupling.w > 0.0 && c.coupling.w <= 1.5, "coupling.w must be in (0, 1.5]");

  const auto& e = c.environment;
  check(e.c_env >= 0.0, "environment.c_env must be >= 0");
  check(e.drift_rate >= 0.0, "environment.drift_rate must be >= 0");
  check(e.noise_sigma >= 0.0, "environment.noise_sigma must be >= 0");
  check(e.parasitic_gain >= 0.0, "environment.parasitic_gain must be >= 0");
  check(e.parasitic_decay >= 0.0, "environment.parasitic_decay must be >= 0");

  check(c.simulate.frame_rate > 0.0, "simulate.frame_rate must be > 0");
  check(c.simulate.object_radius > 0.0, "simulate.object_radius must be > 0");
  std::set<std::string> names;
  for (size_t i = 0; i < c.simulate.trajectories.size(); ++i) {
    const auto& t = c.simulate.trajectories[i];
    std::string where = "simulate.trajectories[" + std::to_string(i) + "]";
    check(!t.name.empty(), where + ".name must be non-empty");
    check(names.insert(t.name).second, where + ".name duplicates another trajectory");
    check(t.role == "train" || t.role == "characterize",
          where + ".role must be \"train\" or \"characterize\"");
    check(t.waypoints.empty() != t.waypoints_csv.empty(),
          where + " must provide exactly one of waypoints / waypoints_csv");
    for (size_t k = 1; k < t.waypoints.size(); ++k)
      check(t.waypoints[k].t > t.waypoints[k - 1].t,
            where + ".waypoints timestamps must be strictly increasing");
  }

  check(c.characterize.window_s > 0.0, "characterize.window_s must be > 0");
  check(c.characterize.noise_floor_multiplier >= 0.0,
        "characterize.noise_floor_multiplier must be >= 0");
  check(c.characterize.snr_threshold > 0.0, "characterize.snr_threshold must be > 0");
  check(c.characterize.object_radius > 0.0, "characterize.object_radius must be > 0");

  const auto& ds = c.dataset;
  check(ds.baseline_window_s > 0.0, "dataset.baseline_window_s must be > 0");
  check(ds.train_fraction > 0.0 && ds.train_fraction < 1.0,
        "dataset.train_fraction must be in (0, 1)");
  check(ds.validation_fraction > 0.0 && ds.validation_fraction < 1.0,
        "dataset.validation_fraction must be in (0, 1)");
  check(ds.train_fraction + ds.validation_fraction < 1.0,
        "dataset.train_fraction + dataset.validation_fraction must be < 1");
  check(ds.feature_scale > 0.0, "dataset.feature_scale must be > 0");

  const auto& en = c.ensemble;
  check(en.members >= 1, "ensemble.members must be >= 1");
  for (int h : en.hidden_widths)
    check(h >= 1, "ensemble.hidden_widths entries must be >= 1");
  check(en.train.epochs >= 1, "ensemble.epochs must be >= 1");
  check(en.train.batch_size >= 1, "ensemble.batch_size must be >= 1");
  check(en.train.learning_rate > 0.0, "ensemble.learning_rate must be > 0");
  check(en.train.dropout_rate >= 0.0 && en.train.dropout_rate < 1.0,
        "ensemble.dropout_rate must be in [0, 1)");
  check(en.bootstrap_fraction > 0.0 && en.bootstrap_fraction <= 1.0,
        "ensemble.bootstrap_fraction must be in (0, 1]");

  check(c.map.n_samples >= 0, "map.n_samples must be >= 0");
  check(c.map.spacing > 0.0, "map.spacing must be > 0");
  check(c.map.sigma_cutoff > 0.0, "map.sigma_cutoff must be > 0");
  check(c.map.bounds_min.has_value() == c.map.bounds_max.has_value(),
        "map.bounds_min and map.bounds_max must be given together");

  const auto& a = c.avoid;
  check(a.radius > 0.0, "avoid.radius must be > 0");
  check(a.period_s > 0.0, "avoid.period_s must be > 0");
  check(a.dt > 0.0, "avoid.dt must be > 0");
  check(a.calibration_s > 0.0, "avoid.calibration_s must be > 0");
  check(a.duration_s > a.calibration_s,
        "avoid.duration_s must exceed avoid.calibration_s");
  check(a.track_gain >= 0.0, "avoid.track_gain must be >= 0");
  check(a.drift_timescale_s > 0.0, "avoid.drift_timescale_s must be > 0");
  check(a.object_radius > 0.0, "avoid.object_radius must be > 0");
  check(a.gains.k_rep >= 0.0, "avoid.k_rep must be >= 0");
  check(a.gains.d_safe > 0.0, "avoid.d_safe must be > 0");
  check(a.gains.s_min >= 0.0 && a.gains.s_min <= 1.0, "avoid.s_min must be in [0, 1]");
  check(a.gains.snr_threshold > 0.0, "avoid.snr_threshold must be > 0");
  for (size_t i = 0; i < a.intruders.size(); ++i) {
    std::string where = "avoid.intruders[" + std::to_string(i) + "]";
    check(a.intruders[i].t_start >= a.calibration_s,
          where + ".t_start must be >= avoid.calibration_s");
    check(a.intruders[i].t_end > a.intruders[i].t_start,
          where + ".t_end must be > t_start");
    check(a.intruders[i].radius > 0.0, where + ".radius must be > 0");
  }
}

inline PipelineConfig config_from_json(const nlohmann::json& root) {
  PipelineConfig c;
  detail::StrictObject top(root, "");

  const auto& ver = top.require("schema_version");
  if (!ver.is_number_integer())
    throw ConfigError("schema_version must be an integer");
  c.schema_version = ver.get<int>();
  if (c.schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version " + std::to_string(c.schema_version) +
                      " is not supported (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");

  c.mesh = top.require_text("mesh");

  {
    detail::StrictObject seeds(top.require("seeds"), "seeds");
    c.seeds.layout = seeds.require_u64("layout");
    c.seeds.simulate = seeds.require_u64("simulate");
    c.seeds.dataset = seeds.require_u64("dataset");
    c.seeds.train = seeds.require_u64("train");
    c.seeds.map = seeds.require_u64("map");
    c.seeds.avoid = seeds.require_u64("avoid");
    seeds.finish();
  }

  if (const auto* j = top.take("design")) {
    detail::StrictObject o(*j, "design");
    auto& d = c.design;
    d.region_threshold = o.number("region_threshold", d.region_threshold);
    d.thickness = o.number("thickness", d.thickness);
    d.r_min = o.number("r_min", d.r_min);
    d.max_attempts = o.integer("max_attempts", d.max_attempts);
    d.radius_scale = o.number("radius_scale", d.radius_scale);
    d.nodule_depth = o.number("nodule_depth", d.nodule_depth);
    d.min_radius = o.number("min_radius", d.min_radius);
    d.max_radius = o.number("max_radius", d.max_radius);
    d.route_layers = o.integer("route_layers", d.route_layers);
    d.layer_gap = o.number("layer_gap", d.layer_gap);
    d.connect_radius = o.number("connect_radius", d.connect_radius);
    d.port_count = o.integer("port_count", d.port_count);
    d.a_mix = o.number("a_mix", d.a_mix);
    d.clearance = o.number("clearance", d.clearance);
    d.profile_radius = o.number("profile_radius", d.profile_radius);
    d.smoothing_samples = o.integer("smoothing_samples", d.smoothing_samples);
    d.boundary_samples = o.integer("boundary_samples", d.boundary_samples);
    d.resistance_per_meter = o.number("resistance_per_meter", d.resistance_per_meter);
    d.base_resistor = o.number("base_resistor", d.base_resistor);
    d.link_frame = o.text("link_frame", d.link_frame);
    o.finish();
  }

  if (const auto* j = top.take("circuit")) {
    detail::StrictObject o(*j, "circuit");
    c.samples_averaged = o.integer("samples_averaged", c.samples_averaged);
    c.cycle_frequency = o.number("cycle_frequency", c.cycle_frequency);
    o.finish();
  }

  if (const auto* j = top.take("coupling")) {
    detail::StrictObject o(*j, "coupling");
    c.coupling.area_scale = o.number("area_scale", c.coupling.area_scale);
    c.coupling.w = o.number("w", c.coupling.w);
    o.finish();
  }

  if (const auto* j = top.take("environment")) {
    detail::StrictObject o(*j, "environment");
    auto& e = c.environment;
    e.c_env = o.number("c_env", e.c_env);
    e.drift_rate = o.number("drift_rate", e.drift_rate);
    e.noise_sigma = o.number("noise_sigma", e.noise_sigma);
    e.parasitic_gain = o.number("parasitic_gain", e.parasitic_gain);
    e.parasitic_decay = o.number("parasitic_decay", e.parasitic_decay);
    if (const auto* per = o.take("c_env_per_sensor")) {
      if (!per->is_array())
        throw ConfigError("environment.c_env_per_sensor must be an array");
      e.c_env_per_sensor = per->get<std::vector<double>>();
    }
    o.finish();
  }

  if (const auto* j = top.take("simulate")) {
    detail::StrictObject o(*j, "simulate");
    c.simulate.frame_rate = o.number("frame_rate", c.simulate.frame_rate);
    c.simulate.object_radius = o.number("object_radius", c.simulate.object_radius);
    if (const auto* trajs = o.take("trajectories")) {
      if (!trajs->is_array())
        throw ConfigError("simulate.trajectories must be an array");
      for (size_t i = 0; i < trajs->size(); ++i) {
        std::string where = "simulate.trajectories[" + std::to_string(i) + "]";
        detail::StrictObject to((*trajs)[i], where);
        TrajectorySpec spec;
        spec.name = to.require_text("name");
        spec.role = to.text("role", spec.role);
        if (const auto* wps = to.take("waypoints")) {
          if (!wps->is_array()) throw ConfigError(where + ".waypoints must be an array");
          for (const auto& wp : *wps) {
            if (!wp.is_array() || wp.size() != 4)
              throw ConfigError(where + ".waypoints entries must be [t, x, y, z]");
            spec.waypoints.push_back(
                {wp[0].get<double>(),
                 {wp[1].get<double>(), wp[2].get<double>(), wp[3].get<double>()}});
          }
        }
        spec.waypoints_csv = to.text("waypoints_csv", "");
        to.finish();
        c.simulate.trajectories.push_back(std::move(spec));
      }
    }
    o.finish();
  }

  if (const auto* j = top.take("characterize")) {
    detail::StrictObject o(*j, "characterize");
    auto& ch = c.characterize;
    ch.window_s = o.number("window_s", ch.window_s);
    ch.noise_floor_multiplier =
        o.number("noise_floor_multiplier", ch.noise_floor_multiplier);
    ch.snr_threshold = o.number("snr_threshold", ch.snr_threshold);
    ch.object_radius = o.number("object_radius", ch.object_radius);
    o.finish();
  }

  if (const auto* j = top.take("dataset")) {
    detail::StrictObject o(*j, "dataset");
    auto& ds = c.dataset;
    ds.baseline_window_s = o.number("baseline_window_s", ds.baseline_window_s);
    ds.train_fraction = o.number("train_fraction", ds.train_fraction);
    ds.validation_fraction = o.number("validation_fraction", ds.validation_fraction);
    ds.feature_scale = o.number("feature_scale", ds.feature_scale);
    o.finish();
  }

  if (const auto* j = top.take("ensemble")) {
    detail::StrictObject o(*j, "ensemble");
    auto& en = c.ensemble;
    en.members = o.integer("members", en.members);
    if (const auto* hw = o.take("hidden_widths")) {
      if (!hw->is_array()) throw ConfigError("ensemble.hidden_widths must be an array");
      en.hidden_widths = hw->get<std::vector<int>>();
    }
    en.train.epochs = o.integer("epochs", en.train.epochs);
    en.train.batch_size = o.integer("batch_size", en.train.batch_size);
    en.train.learning_rate = o.number("learning_rate", en.train.learning_rate);
    en.train.dropout_rate = o.number("dropout_rate", en.train.dropout_rate);
    en.bootstrap_fraction = o.number("bootstrap_fraction", en.bootstrap_fraction);
    en.with_replacement = o.boolean("with_replacement", en.with_replacement);
    o.finish();
  }

  if (const auto* j = top.take("map")) {
    detail::StrictObject o(*j, "map");
    c.map.n_samples = o.integer("n_samples", c.map.n_samples);
    c.map.spacing = o.number("spacing", c.map.spacing);
    c.map.sigma_cutoff = o.number("sigma_cutoff", c.map.sigma_cutoff);
    if (const auto* b = o.take("bounds_min"))
      c.map.bounds_min = detail::vec3_field(*b, "map.bounds_min");
    if (const auto* b = o.take("bounds_max"))
      c.map.bounds_max = detail::vec3_field(*b, "map.bounds_max");
    o.finish();
  }

  if (const auto* j = top.take("avoid")) {
    detail::StrictObject o(*j, "avoid");
    auto& a = c.avoid;
    if (const auto* ctr = o.take("center"))
      a.center = detail::vec3_field(*ctr, "avoid.center");
    a.radius = o.number("radius", a.radius);
    a.period_s = o.number("period_s", a.period_s);
    a.duration_s = o.number("duration_s", a.duration_s);
    a.dt = o.number("dt", a.dt);
    a.track_gain = o.number("track_gain", a.track_gain);
    a.calibration_s = o.number("calibration_s", a.calibration_s);
    a.drift_timescale_s = o.number("drift_timescale_s", a.drift_timescale_s);
    a.object_radius = o.number("object_radius", a.object_radius);
    a.gains.k_rep = o.number("k_rep", a.gains.k_rep);
    a.gains.d_safe = o.number("d_safe", a.gains.d_safe);
    a.gains.s_min = o.number("s_min", a.gains.s_min);
    a.gains.snr_threshold = o.number("snr_threshold", a.gains.snr_threshold);
    if (const auto* ins = o.take("intruders")) {
      if (!ins->is_array()) throw ConfigError("avoid.intruders must be an array");
      for (size_t i = 0; i < ins->size(); ++i) {
        std::string where = "avoid.intruders[" + std::to_string(i) + "]";
        detail::StrictObject io((*ins)[i], where);
        IntruderEvent ev;
        ev.t_start = io.require_number("t_start");
        ev.t_end = io.require_number("t_end");
        ev.position = detail::vec3_field(io.require("position"), where + ".position");
        ev.radius = io.number("radius", ev.radius);
        io.finish();
        a.intruders.push_back(ev);
      }
    }
    o.finish();
  }

  top.finish();
  validate_config(c);
  return c;
}

// Canonical re-serialization of the effective (defaults materialized)
// configuration; the provenance hash is taken over this.
inline ojson config_to_json(const PipelineConfig& c) {
  ojson j;
  j["schema_version"] = c.schema_version;
  j["mesh"] = c.mesh;
  j["seeds"] = ojson{{"layout", c.seeds.layout},     {"simulate", c.seeds.simulate},
                     {"dataset", c.seeds.dataset},   {"train", c.seeds.train},
                     {"map", c.seeds.map},           {"avoid", c.seeds.avoid}};
  const auto& d = c.design;
  j["design"] = ojson{{"region_threshold", d.region_threshold},
                      {"thickness", d.thickness},
                      {"r_min", d.r_min},
                      {"max_attempts", d.max_attempts},
                      {"radius_scale", d.radius_scale},
                      {"nodule_depth", d.nodule_depth},
                      {"min_radius", d.min_radius},
                      {"max_radius", d.max_radius},
                      {"route_layers", d.route_layers},
                      {"layer_gap", d.layer_gap},
                      {"connect_radius", d.connect_radius},
                      {"port_count", d.port_count},
                      {"a_mix", d.a_mix},
                      {"clearance", d.effective_clearance()},
                      {"profile_radius", d.profile_radius},
                      {"smoothing_samples", d.smoothing_samples},
                      {"boundary_samples", d.boundary_samples},
                      {"resistance_per_meter", d.resistance_per_meter},
                      {"base_resistor", d.base_resistor},
                      {"link_frame", d.link_frame}};
  j["circuit"] = ojson{{"samples_averaged", c.samples_averaged},
                       {"cycle_frequency", c.cycle_frequency}};
  j["coupling"] = ojson{{"area_scale", c.coupling.area_scale}, {"w", c.coupling.w}};
  ojson env{{"c_env", c.environment.c_env},
            {"drift_rate", c.environment.drift_rate},
            {"noise_sigma", c.environment.noise_sigma},
            {"parasitic_gain", c.environment.parasitic_gain},
            {"parasitic_decay", c.environment.parasitic_decay}};
  if (!c.environment.c_env_per_sensor.empty())
    env["c_env_per_sensor"] = c.environment.c_env_per_sensor;
  j["environment"] = env;
  ojson trajs = ojson::array();
  for (const auto& t : c.simulate.trajectories) {
    ojson tj{{"name", t.name}, {"role", t.role}};
    if (!t.waypoints_csv.empty()) {
      tj["waypoints_csv"] = t.waypoints_csv;
    } else {
      ojson wps = ojson::array();
      for (const auto& wp : t.waypoints)
        wps.push_back(
            ojson::array({wp.t, wp.position.x, wp.position.y, wp.position.z}));
      tj["waypoints"] = wps;
    }
    trajs.push_back(tj);
  }
  j["simulate"] = ojson{{"frame_rate", c.simulate.frame_rate},
                        {"object_radius", c.simulate.object_radius},
                        {"trajectories", trajs}};
  j["characterize"] =
      ojson{{"window_s", c.characterize.window_s},
            {"noise_floor_multiplier", c.characterize.noise_floor_multiplier},
            {"snr_threshold", c.characterize.snr_threshold},
            {"object_radius", c.characterize.object_radius}};
  j["dataset"] = ojson{{"baseline_window_s", c.dataset.baseline_window_s},
                       {"train_fraction", c.dataset.train_fraction},
                       {"validation_fraction", c.dataset.validation_fraction},
                       {"feature_scale", c.dataset.feature_scale}};
  j["ensemble"] = ojson{{"members", c.ensemble.members},
                        {"hidden_widths", c.ensemble.hidden_widths},
                        {"epochs", c.ensemble.train.epochs},
                        {"batch_size", c.ensemble.train.batch_size},
                        {"learning_rate", c.ensemble.train.learning_rate},
                        {"dropout_rate", c.ensemble.train.dropout_rate},
                        {"bootstrap_fraction", c.ensemble.bootstrap_fraction},
                        {"with_replacement", c.ensemble.with_replacement}};
  ojson mj{{"n_samples", c.map.n_samples},
           {"spacing", c.map.spacing},
           {"sigma_cutoff", c.map.sigma_cutoff}};
  if (c.map.bounds_min) mj["bounds_min"] = vec3_to_json(*c.map.bounds_min);
  if (c.map.bounds_max) mj["bounds_max"] = vec3_to_json(*c.map.bounds_max);
  j["map"] = mj;
  ojson ins = ojson::array();
  for (const auto& ev : c.avoid.intruders)
    ins.push_back(ojson{{"t_start", ev.t_start},
                        {"t_end", ev.t_end},
                        {"position", vec3_to_json(ev.position)},
                        {"radius", ev.radius}});
  j["avoid"] = ojson{{"center", vec3_to_json(c.avoid.center)},
                     {"radius", c.avoid.radius},
                     {"period_s", c.avoid.period_s},
                     {"duration_s", c.avoid.duration_s},
                     {"dt", c.avoid.dt},
                     {"track_gain", c.avoid.track_gain},
                     {"calibration_s", c.avoid.calibration_s},
                     {"drift_timescale_s", c.avoid.drift_timescale_s},
                     {"object_radius", c.avoid.object_radius},
                     {"k_rep", c.avoid.gains.k_rep},
                     {"d_safe", c.avoid.gains.d_safe},
                     {"s_min", c.avoid.gains.s_min},
                     {"snr_threshold", c.avoid.gains.snr_threshold},
                     {"intruders", ins}};
  return j;
}

inline std::string config_hash(const PipelineConfig& c) {
  return fnv1a_hex(config_to_json(c).dump());
}

inline PipelineConfig load_config(const std::string& path) {
  std::string text = read_text_file(path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  PipelineConfig c = config_from_json(root);
  auto slash = path.find_last_of('/');
  c.base_dir = slash == std::string::npos ? std::string(".") : path.substr(0, slash);
  return c;
}

// A single command-line seed fans out to one derived seed per randomized
// stage, in a fixed stage order, so one integer still pins the whole run.
inline void apply_seed_override(PipelineConfig& c, std::uint64_t seed) {
  Rng base(seed);
  c.seeds.layout = base.derive(0).seed();
  c.seeds.simulate = base.derive(1).seed();
  c.seeds.dataset = base.derive(2).seed();
  c.seeds.train = base.derive(3).seed();
  c.seeds.map = base.derive(4).seed();
  c.seeds.avoid = base.derive(5).seed();
}

}  // namespace gentact
