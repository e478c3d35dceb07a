// JSON and CSV serialization for every artifact the pipeline exchanges on
// disk, plus content hashing for provenance sidecars. All writers are
// deterministic: key order is fixed, numbers use shortest round-trip
// formatting, and nothing emits timestamps.
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/avoidance.hpp"
#include "gentact/capacitance.hpp"
#include "gentact/characterize.hpp"
#include "gentact/layout.hpp"
#include "gentact/math.hpp"
#include "gentact/mesh.hpp"
#include "gentact/pss.hpp"
#include "gentact/routing.hpp"

#include <nlohmann/json.hpp>

namespace gentact {

// Insertion-ordered JSON keeps emitted files stable across runs and readable
// in diffs.
using ojson = nlohmann::ordered_json;

struct FileIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArchiveFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Files and hashing

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileIoError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileIoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw FileIoError("write failed: " + path);
}

// FNV-1a 64-bit over raw bytes, rendered as fixed-width hex.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string hash_file(const std::string& path) {
  return fnv1a_hex(read_text_file(path));
}

// Shortest decimal string that round-trips the double; reuses the JSON
// emitter so CSV and JSON agree on formatting.
inline std::string num_str(double x) { return nlohmann::json(x).dump(); }

// ---------------------------------------------------------------------------
// Math primitives

inline ojson vec3_to_json(const Vec3& v) { return ojson::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3)
    throw ArchiveFormatError("expected [x, y, z] triple");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline ojson mat4_to_json(const Mat4& m) {
  ojson a = ojson::array();
  for (int i = 0; i < 16; ++i) a.push_back(m.m[i]);
  return a;
}

inline Mat4 mat4_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 16)
    throw ArchiveFormatError("expected 16-element row-major matrix");
  Mat4 m;
  for (int i = 0; i < 16; ++i) m.m[i] = j[i].get<double>();
  return m;
}

// ---------------------------------------------------------------------------
// Electrodes

inline ojson electrode_to_json(const Electrode& e) {
  ojson j;
  j["id"] = e.id;
  j["center"] = vec3_to_json(e.center);
  j["normal"] = vec3_to_json(e.normal);
  j["radius"] = e.radius;
  j["depth"] = e.depth;
  j["area"] = e.area;
  j["link_frame"] = e.link_frame;
  j["local_pose"] = mat4_to_json(e.local_pose);
  return j;
}

inline Electrode electrode_from_json(const nlohmann::json& j) {
  Electrode e;
  e.id = j.at("id").get<int>();
  e.center = vec3_from_json(j.at("center"));
  e.normal = vec3_from_json(j.at("normal"));
  e.radius = j.at("radius").get<double>();
  e.depth = j.at("depth").get<double>();
  e.area = j.at("area").get<double>();
  e.link_frame = j.at("link_frame").get<std::string>();
  e.local_pose = mat4_from_json(j.at("local_pose"));
  return e;
}

inline ojson electrodes_to_json(const std::vector<Electrode>& electrodes) {
  ojson arr = ojson::array();
  for (const auto& e : electrodes) arr.push_back(electrode_to_json(e));
  return arr;
}

inline std::vector<Electrode> electrodes_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ArchiveFormatError("electrodes file must be a JSON array");
  std::vector<Electrode> out;
  for (const auto& e : j) out.push_back(electrode_from_json(e));
  return out;
}

// ---------------------------------------------------------------------------
// Wires

struct WireRecord {
  int port_id = -1;
  int electrode_id = -1;
  std::vector<Vec3> polyline;  // routed node positions, port to electrode
  double length = 0.0;         // routed graph length
  double profile_radius = 0.0;
};

inline ojson wires_to_json(const std::vector<WireRecord>& wires) {
  ojson arr = ojson::array();
  for (const auto& w : wires) {
    ojson j;
    j["port_id"] = w.port_id;
    j["electrode_id"] = w.electrode_id;
    ojson poly = ojson::array();
    for (const auto& p : w.polyline) poly.push_back(vec3_to_json(p));
    j["polyline"] = poly;
    j["length"] = w.length;
    j["profile_radius"] = w.profile_radius;
    arr.push_back(j);
  }
  return arr;
}

inline std::vector<WireRecord> wires_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ArchiveFormatError("wires file must be a JSON array");
  std::vector<WireRecord> out;
  for (const auto& w : j) {
    WireRecord r;
    r.port_id = w.at("port_id").get<int>();
    r.electrode_id = w.at("electrode_id").get<int>();
    for (const auto& p : w.at("polyline")) r.polyline.push_back(vec3_from_json(p));
    r.length = w.at("length").get<double>();
    r.profile_radius = w.at("profile_radius").get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

// OBJ export of tubed wires as polylines (l elements) for visual inspection.
inline std::string wires_to_obj(const std::vector<TubedWire>& wires) {
  std::ostringstream ss;
  int base = 1;
  for (size_t w = 0; w < wires.size(); ++w) {
    ss << "o wire_" << w << "\n";
    for (const auto& p : wires[w].centerline)
      ss << "v " << num_str(p.x) << " " << num_str(p.y) << " " << num_str(p.z) << "\n";
    ss << "l";
    for (size_t i = 0; i < wires[w].centerline.size(); ++i) ss << " " << (base + i);
    ss << "\n";
    base += static_cast<int>(wires[w].centerline.size());
  }
  return ss.str();
}

// ---------------------------------------------------------------------------
// Skin unit

inline ojson skin_to_json(const SkinUnit& skin) {
  ojson j;
  j["link_frame"] = skin.link_frame;
  j["origin"] = mat4_to_json(skin.origin);
  j["samples_averaged"] = skin.samples_averaged;
  j["cycle_frequency"] = skin.cycle_frequency;
  ojson sensors = ojson::array();
  for (const auto& s : skin.sensors) {
    ojson sj;
    sj["electrode"] = electrode_to_json(s.electrode);
    sj["wire_length"] = s.wire_length;
    sj["resistance"] = s.resistance;
    sj["coupling"] = ojson{{"k", s.coupling.k}, {"w", s.coupling.w}};
    sensors.push_back(sj);
  }
  j["sensors"] = sensors;
  return j;
}

inline SkinUnit skin_from_json(const nlohmann::json& j) {
  SkinUnit skin;
  skin.link_frame = j.at("link_frame").get<std::string>();
  skin.origin = mat4_from_json(j.at("origin"));
  skin.samples_averaged = j.at("samples_averaged").get<int>();
  skin.cycle_frequency = j.at("cycle_frequency").get<double>();
  for (const auto& sj : j.at("sensors")) {
    SensorChannel s;
    s.electrode = electrode_from_json(sj.at("electrode"));
    s.wire_length = sj.at("wire_length").get<double>();
    s.resistance = sj.at("resistance").get<double>();
    s.coupling.k = sj.at("coupling").at("k").get<double>();
    s.coupling.w = sj.at("coupling").at("w").get<double>();
    skin.sensors.push_back(std::move(s));
  }
  return skin;
}

// ---------------------------------------------------------------------------
// Recorded frames (CSV)

inline std::string frames_to_csv(const std::vector<CapacitanceFrame>& frames,
                                 size_t n_sensors) {
  std::ostringstream ss;
  ss << "t,obj_x,obj_y,obj_z";
  for (size_t i = 0; i < n_sensors; ++i) ss << ",s" << i;
  ss << "\n";
  for (const auto& f : frames) {
    if (f.counts.size() != n_sensors)
      throw ArchiveFormatError("frame count width does not match sensor count");
    ss << num_str(f.t) << "," << num_str(f.truth_object_position.x) << ","
       << num_str(f.truth_object_position.y) << ","
       << num_str(f.truth_object_position.z);
    for (auto c : f.counts) ss << "," << c;
    ss << "\n";
  }
  return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

// Parses the canonical frame CSV. Truth capacitances are not persisted; the
// returned frames carry timestamps, object positions, and counts only.
inline std::vector<CapacitanceFrame> frames_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line))
    throw ArchiveFormatError("frames csv: empty file");
  auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "t" || header[1] != "obj_x" ||
      header[2] != "obj_y" || header[3] != "obj_z")
    throw ArchiveFormatError("frames csv: expected header t,obj_x,obj_y,obj_z,s0..");
  size_t n_sensors = header.size() - 4;
  std::vector<CapacitanceFrame> frames;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ArchiveFormatError("frames csv: row width does not match header");
    CapacitanceFrame f;
    f.t = std::stod(fields[0]);
    f.truth_object_position = {std::stod(fields[1]), std::stod(fields[2]),
                               std::stod(fields[3])};
    for (size_t i = 0; i < n_sensors; ++i)
      f.counts.push_back(static_cast<std::int64_t>(std::stoll(fields[4 + i])));
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw ArchiveFormatError("frames csv: no data rows");
  return frames;
}

// Waypoint CSV: rows of t,x,y,z with an optional header line.
inline std::vector<TimedWaypoint> waypoints_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::vector<TimedWaypoint> out;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw ArchiveFormatError("waypoint csv: expected 4 columns t,x,y,z");
    if (first) {
      first = false;
      try {
        std::stod(fields[0]);
      } catch (const std::exception&) {
        continue;  // header line
      }
    }
    out.push_back({std::stod(fields[0]),
                   {std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])}});
  }
  if (out.empty()) throw ArchiveFormatError("waypoint csv: no waypoints");
  return out;
}

// ---------------------------------------------------------------------------
// Characterization report

inline ojson characterization_to_json(const CharacterizationReport& report) {
  ojson arr = ojson::array();
  for (const auto& sc : report.sensors) {
    ojson j;
    j["sensor_id"] = sc.sensor_id;
    j["area"] = sc.area;
    j["wire_length"] = sc.wire_length;
    j["max_snr"] = sc.max_snr;
    if (sc.detection_range_m)
      j["detection_range_m"] = *sc.detection_range_m;
    else
      j["detection_range_m"] = nullptr;
    j["fit"] = ojson{{"k", sc.fit.k},
                     {"w", sc.fit.w},
                     {"pearson_r", sc.fit.pearson_r},
                     {"n_samples", sc.fit.n_samples},
                     {"w_outside_band", sc.fit.w_outside_band}};
    j["baseline"] = ojson{{"mu_n", sc.baseline.mu_n},
                          {"sigma_n", sc.baseline.sigma_n},
                          {"window_s", sc.baseline.window_s}};
    arr.push_back(j);
  }
  return ojson{{"sensors", arr}};
}

inline CharacterizationReport characterization_from_json(const nlohmann::json& j) {
  CharacterizationReport report;
  for (const auto& sj : j.at("sensors")) {
    SensorCharacterization sc;
    sc.sensor_id = sj.at("sensor_id").get<int>();
    sc.area = sj.at("area").get<double>();
    sc.wire_length = sj.at("wire_length").get<double>();
    sc.max_snr = sj.at("max_snr").get<double>();
    if (!sj.at("detection_range_m").is_null())
      sc.detection_range_m = sj.at("detection_range_m").get<double>();
    const auto& fj = sj.at("fit");
    sc.fit.sensor_id = sc.sensor_id;
    sc.fit.k = fj.at("k").get<double>();
    sc.fit.w = fj.at("w").get<double>();
    sc.fit.pearson_r = fj.at("pearson_r").get<double>();
    sc.fit.n_samples = fj.at("n_samples").get<int>();
    sc.fit.w_outside_band = fj.at("w_outside_band").get<bool>();
    const auto& bj = sj.at("baseline");
    sc.baseline.mu_n = bj.at("mu_n").get<double>();
    sc.baseline.sigma_n = bj.at("sigma_n").get<double>();
    sc.baseline.window_s = bj.at("window_s").get<double>();
    report.sensors.push_back(std::move(sc));
  }
  return report;
}

// Human-readable table mirroring the per-sensor datasheet fields.
inline std::string characterization_to_csv(const CharacterizationReport& report) {
  std::ostringstream ss;
  ss << "sensor_id,area_m2,wire_length_m,max_snr,detection_range_m\n";
  for (const auto& sc : report.sensors) {
    ss << sc.sensor_id << "," << num_str(sc.area) << "," << num_str(sc.wire_length)
       << "," << num_str(sc.max_snr) << ",";
    if (sc.detection_range_m) ss << num_str(*sc.detection_range_m);
    ss << "\n";
  }
  return ss.str();
}

// ---------------------------------------------------------------------------
// Ensemble weight archive

inline constexpr int kEnsembleArchiveVersion = 1;

inline ojson ensemble_to_json(const Ensemble& ensemble) {
  ojson j;
  j["archive_version"] = kEnsembleArchiveVersion;
  j["master_seed"] = ensemble.master_seed;
  j["origin_frame"] = ensemble.origin_frame;
  j["config"] = ojson{
      {"members", ensemble.config.members},
      {"hidden_widths", ensemble.config.hidden_widths},
      {"bootstrap_fraction", ensemble.config.bootstrap_fraction},
      {"with_replacement", ensemble.config.with_replacement},
      {"train",
       ojson{{"epochs", ensemble.config.train.epochs},
             {"batch_size", ensemble.config.train.batch_size},
             {"learning_rate", ensemble.config.train.learning_rate},
             {"beta1", ensemble.config.train.beta1},
             {"beta2", ensemble.config.train.beta2},
             {"epsilon", ensemble.config.train.epsilon},
             {"dropout_rate", ensemble.config.train.dropout_rate}}}};
  j["member_seeds"] = ensemble.member_seeds;
  j["bootstrap_indices"] = ensemble.bootstrap_indices;
  j["calibration"] = ojson{{"a", ensemble.calibration.a},
                           {"b", ensemble.calibration.b},
                           {"pearson_r", ensemble.calibration.pearson_r},
                           {"valid", ensemble.calibration.valid}};
  j["feature_min"] = ensemble.feature_min;
  j["feature_max"] = ensemble.feature_max;
  ojson members = ojson::array();
  for (const auto& m : ensemble.members) {
    ojson mj;
    mj["sizes"] = m.sizes();
    mj["weights"] = m.weights();
    mj["biases"] = m.biases();
    members.push_back(std::move(mj));
  }
  j["members"] = members;
  return j;
}

inline Ensemble ensemble_from_json(const nlohmann::json& j) {
  if (!j.contains("archive_version"))
    throw ArchiveFormatError("ensemble archive: missing archive_version");
  if (j.at("archive_version").get<int>() != kEnsembleArchiveVersion)
    throw ArchiveFormatError("ensemble archive: unsupported archive_version");
  Ensemble e;
  e.master_seed = j.at("master_seed").get<std::uint64_t>();
  e.origin_frame = j.at("origin_frame").get<std::string>();
  const auto& cj = j.at("config");
  e.config.members = cj.at("members").get<int>();
  e.config.hidden_widths = cj.at("hidden_widths").get<std::vector<int>>();
  e.config.bootstrap_fraction = cj.at("bootstrap_fraction").get<double>();
  e.config.with_replacement = cj.at("with_replacement").get<bool>();
  const auto& tj = cj.at("train");
  e.config.train.epochs = tj.at("epochs").get<int>();
  e.config.train.batch_size = tj.at("batch_size").get<int>();
  e.config.train.learning_rate = tj.at("learning_rate").get<double>();
  e.config.train.beta1 = tj.at("beta1").get<double>();
  e.config.train.beta2 = tj.at("beta2").get<double>();
  e.config.train.epsilon = tj.at("epsilon").get<double>();
  e.config.train.dropout_rate = tj.at("dropout_rate").get<double>();
  e.member_seeds = j.at("member_seeds").get<std::vector<std::uint64_t>>();
  e.bootstrap_indices = j.at("bootstrap_indices").get<std::vector<std::vector<int>>>();
  const auto& kj = j.at("calibration");
  e.calibration.a = kj.at("a").get<double>();
  e.calibration.b = kj.at("b").get<double>();
  e.calibration.pearson_r = kj.at("pearson_r").get<double>();
  e.calibration.valid = kj.at("valid").get<bool>();
  e.feature_min = j.at("feature_min").get<std::vector<double>>();
  e.feature_max = j.at("feature_max").get<std::vector<double>>();
  for (const auto& mj : j.at("members")) {
    auto sizes = mj.at("sizes").get<std::vector<int>>();
    if (sizes.size() < 2) throw ArchiveFormatError("ensemble archive: bad layer sizes");
    std::vector<int> hidden(sizes.begin() + 1, sizes.end() - 1);
    Rng scratch(0);
    MlpModel model(sizes.front(), hidden, scratch);
    auto weights = mj.at("weights").get<std::vector<std::vector<double>>>();
    auto biases = mj.at("biases").get<std::vector<std::vector<double>>>();
    if (weights.size() != model.weights().size() ||
        biases.size() != model.biases().size())
      throw ArchiveFormatError("ensemble archive: layer count mismatch");
    for (size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].size() != model.weights()[l].size() ||
          biases[l].size() != model.biases()[l].size())
        throw ArchiveFormatError("ensemble archive: layer shape mismatch");
    }
    model.weights() = std::move(weights);
    model.biases() = std::move(biases);
    e.members.push_back(std::move(model));
  }
  if (static_cast<int>(e.members.size()) != e.config.members)
    throw ArchiveFormatError("ensemble archive: member count mismatch");
  return e;
}

// ---------------------------------------------------------------------------
// Perisensory grid

inline ojson grid_to_json(const PssGrid& grid) {
  ojson j;
  j["origin"] = vec3_to_json(grid.origin);
  j["spacing"] = grid.spacing;
  j["dims"] = ojson::array({grid.nx, grid.ny, grid.nz});
  j["sigma_cutoff"] = grid.sigma_cutoff;
  j["out_of_extent"] = grid.out_of_extent;
  ojson cells = ojson::array();
  for (const auto& c : grid.cells)
    cells.push_back(ojson::array({c.mean_sigma, c.count, c.outside ? 1 : 0}));
  j["cells"] = cells;
  return j;
}

inline PssGrid grid_from_json(const nlohmann::json& j) {
  PssGrid g;
  g.origin = vec3_from_json(j.at("origin"));
  g.spacing = j.at("spacing").get<double>();
  const auto& dims = j.at("dims");
  g.nx = dims[0].get<int>();
  g.ny = dims[1].get<int>();
  g.nz = dims[2].get<int>();
  g.sigma_cutoff = j.at("sigma_cutoff").get<double>();
  g.out_of_extent = j.at("out_of_extent").get<int>();
  for (const auto& cj : j.at("cells")) {
    PssCell c;
    c.mean_sigma = cj[0].get<double>();
    c.count = cj[1].get<int>();
    c.outside = cj[2].get<int>() != 0;
    g.cells.push_back(c);
  }
  if (g.cells.size() != static_cast<size_t>(g.nx) * g.ny * g.nz)
    throw ArchiveFormatError("grid json: cell count does not match dims");
  return g;
}

// One row per populated cell, positions at cell centers.
inline std::string grid_to_csv(const PssGrid& grid) {
  std::ostringstream ss;
  ss << "x,y,z,mean_sigma,count\n";
  for (int ix = 0; ix < grid.nx; ++ix)
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int iz = 0; iz < grid.nz; ++iz) {
        const auto& c = grid.at(ix, iy, iz);
        if (c.count == 0) continue;
        Vec3 p = grid.cell_center(ix, iy, iz);
        ss << num_str(p.x) << "," << num_str(p.y) << "," << num_str(p.z) << ","
           << num_str(c.mean_sigma) << "," << c.count << "\n";
      }
  return ss.str();
}

// ---------------------------------------------------------------------------
// Test metrics and scenario logs

inline ojson metrics_to_json(const TestMetrics& metrics, double range_limit,
                             const RangeSplitMedians& medians) {
  ojson j;
  j["n_test_frames"] = metrics.errors.size();
  j["pearson_error_sigma"] = metrics.pearson_error_sigma;
  j["knee_distance"] = metrics.knee_distance;
  j["range_limit"] = range_limit;
  j["median_error_in_range"] = medians.in_range;
  j["median_error_beyond"] = medians.beyond;
  j["n_in_range"] = medians.n_in;
  j["n_beyond"] = medians.n_beyond;
  j["bin_centers"] = metrics.bin_centers;
  j["bin_mean_error"] = metrics.bin_mean_error;
  j["bin_counts"] = metrics.bin_counts;
  return j;
}

inline std::string scenario_to_csv(const ScenarioLog& log) {
  std::ostringstream ss;
  ss << "t,des_x,des_y,des_z,act_x,act_y,act_z,speed,n_obstacles,min_distance\n";
  for (const auto& f : log.frames) {
    ss << num_str(f.t) << "," << num_str(f.desired.x) << "," << num_str(f.desired.y)
       << "," << num_str(f.desired.z) << "," << num_str(f.actual.x) << ","
       << num_str(f.actual.y) << "," << num_str(f.actual.z) << ","
       << num_str(f.speed) << "," << f.n_obstacles << ","
       << num_str(f.min_obstacle_distance) << "\n";
  }
  return ss.str();
}

}  // namespace gentact
