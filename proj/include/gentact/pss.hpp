// Perisensory-space learning: whole-trajectory dataset splits with per-
// trajectory baseline subtraction, a bootstrap ensemble of position
// regressors, affine uncertainty calibration against held-out error, grid
// projection of the usable sensing volume, and test-set metrics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/capacitance.hpp"
#include "gentact/math.hpp"
#include "gentact/mlp.hpp"
#include "gentact/rng.hpp"

namespace gentact {

struct TrajectoryTooShortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergedMemberError : std::runtime_error {
  int member_index;
  std::uint64_t member_seed;
  DivergedMemberError(int index, std::uint64_t seed)
      : std::runtime_error("train_ensemble: member " + std::to_string(index) +
                           " diverged (reproduce with seed " +
                           std::to_string(seed) + ")"),
        member_index(index),
        member_seed(seed) {}
};

struct DegenerateFitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotCalibratedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One supervised example: baseline-subtracted capacitance features (scaled
// to picofarads so the optimizer sees O(1) numbers) and the object position
// expressed in the skin-unit origin frame.
struct PssSample {
  std::vector<double> features;
  Vec3 position;
};

struct PssDataset {
  std::vector<PssSample> train, validation, test;
  std::vector<int> train_trajectories, validation_trajectories, test_trajectories;
  std::vector<double> feature_min, feature_max;  // per channel, train split only
};

struct DatasetConfig {
  double baseline_window_s = 2.0;
  double train_fraction = 0.70;
  double validation_fraction = 0.15;  // test takes the remainder
  double feature_scale = 1e12;        // farads -> picofarads
  Mat4 origin;                        // skin-unit origin frame, world coords
};

// Splits whole trajectories (never frames) into train/validation/test,
// subtracts each trajectory's opening-window baseline per channel, and
// converts counts to scaled baseline-relative capacitance features.
inline PssDataset prepare_dataset(
    const SkinUnit& skin,
    const std::vector<std::vector<CapacitanceFrame>>& trajectories,
    std::uint64_t seed, const DatasetConfig& config = {}) {
  size_t n_traj = trajectories.size();
  if (n_traj < 3)
    throw std::invalid_argument(
        "prepare_dataset: need at least 3 trajectories for a 3-way split");
  size_t n_sensors = skin.sensors.size();
  if (n_sensors == 0) throw std::invalid_argument("prepare_dataset: skin has no sensors");

  // Per-trajectory feature extraction.
  std::vector<std::vector<PssSample>> per_traj(n_traj);
  Mat4 world_from_origin = config.origin;
  Mat4 origin_from_world = world_from_origin.inverse_rigid();
  for (size_t ti = 0; ti < n_traj; ++ti) {
    const auto& frames = trajectories[ti];
    if (frames.empty())
      throw TrajectoryTooShortError("prepare_dataset: trajectory " +
                                    std::to_string(ti) + " is empty");
    double t0 = frames.front().t;
    double span = frames.back().t - t0;
    if (span < config.baseline_window_s)
      throw TrajectoryTooShortError(
          "prepare_dataset: trajectory " + std::to_string(ti) +
          " is shorter than the baseline window");
    std::vector<double> baseline(n_sensors, 0.0);
    int window_frames = 0;
    for (const auto& f : frames) {
      if (f.t > t0 + config.baseline_window_s) break;
      for (size_t s = 0; s < n_sensors; ++s)
        baseline[s] += static_cast<double>(f.counts.at(s));
      ++window_frames;
    }
    if (window_frames == 0)
      throw TrajectoryTooShortError("prepare_dataset: trajectory " +
                                    std::to_string(ti) +
                                    " has no baseline-window frames");
    for (auto& b : baseline) b /= window_frames;

    for (const auto& f : frames) {
      PssSample sample;
      sample.features.resize(n_sensors);
      for (size_t s = 0; s < n_sensors; ++s) {
        double cpf = skin.circuit(s).counts_per_farad();
        sample.features[s] = (static_cast<double>(f.counts.at(s)) - baseline[s]) /
                             cpf * config.feature_scale;
      }
      sample.position = origin_from_world.transform_point(f.truth_object_position);
      per_traj[ti].push_back(std::move(sample));
    }
  }

  // Whole-trajectory split with at-least-one-per-split flooring.
  auto n_val = std::max<size_t>(
      1, static_cast<size_t>(std::floor(config.validation_fraction * n_traj)));
  double test_fraction =
      1.0 - config.train_fraction - config.validation_fraction;
  auto n_test = std::max<size_t>(
      1, static_cast<size_t>(std::floor(test_fraction * n_traj)));
  if (n_val + n_test >= n_traj)
    throw std::invalid_argument("prepare_dataset: split leaves no training trajectories");

  std::vector<int> order(n_traj);
  for (size_t i = 0; i < n_traj; ++i) order[i] = static_cast<int>(i);
  Rng rng(seed);
  rng.shuffle(order);

  PssDataset ds;
  size_t n_train = n_traj - n_val - n_test;
  for (size_t i = 0; i < n_traj; ++i) {
    int ti = order[i];
    auto& bucket = i < n_train ? ds.train
                   : i < n_train + n_val ? ds.validation
                                         : ds.test;
    auto& ids = i < n_train ? ds.train_trajectories
                : i < n_train + n_val ? ds.validation_trajectories
                                      : ds.test_trajectories;
    for (auto& s : per_traj[ti]) bucket.push_back(std::move(s));
    ids.push_back(ti);
  }
  std::sort(ds.train_trajectories.begin(), ds.train_trajectories.end());
  std::sort(ds.validation_trajectories.begin(), ds.validation_trajectories.end());
  std::sort(ds.test_trajectories.begin(), ds.test_trajectories.end());

  ds.feature_min.assign(n_sensors, std::numeric_limits<double>::infinity());
  ds.feature_max.assign(n_sensors, -std::numeric_limits<double>::infinity());
  for (const auto& s : ds.train)
    for (size_t c = 0; c < n_sensors; ++c) {
      ds.feature_min[c] = std::min(ds.feature_min[c], s.features[c]);
      ds.feature_max[c] = std::max(ds.feature_max[c], s.features[c]);
    }
  return ds;
}

struct EnsembleConfig {
  int members = 100;
  std::vector<int> hidden_widths = {64, 64};
  TrainConfig train;               // 40 epochs, batch 64, lr 1e-4, dropout 0.1
  double bootstrap_fraction = 0.5;
  bool with_replacement = false;   // classical bootstrap alternative
};

struct Calibration {
  double a = 1.0;
  double b = 0.0;
  double pearson_r = 0.0;
  bool valid = false;
};

struct PssPrediction {
  Vec3 mu_p;
  double sigma_raw = 0.0;
  double sigma_cal = 0.0;
};

struct Ensemble {
  EnsembleConfig config;
  std::uint64_t master_seed = 0;
  std::string origin_frame;  // skin-unit frame the positions are expressed in
  std::vector<MlpModel> members;
  std::vector<std::uint64_t> member_seeds;
  std::vector<std::vector<int>> bootstrap_indices;  // per member, sorted
  Calibration calibration;
  std::vector<double> feature_min, feature_max;  // training feature ranges
};

// Trains `config.members` regressors, each on its own half-sized bootstrap
// sample of the training split. Fully deterministic from master_seed.
inline Ensemble train_ensemble(const std::vector<PssSample>& train_split,
                               const EnsembleConfig& config,
                               std::uint64_t master_seed) {
  if (train_split.empty())
    throw std::invalid_argument("train_ensemble: empty training split");
  if (config.members < 1)
    throw std::invalid_argument("train_ensemble: need at least one member");
  if (config.bootstrap_fraction <= 0.0 || config.bootstrap_fraction > 1.0)
    throw std::invalid_argument(
        "train_ensemble: bootstrap_fraction must be in (0, 1]");

  size_t n = train_split.size();
  int input_dim = static_cast<int>(train_split.front().features.size());
  std::vector<std::vector<double>> features;
  std::vector<Vec3> targets;
  features.reserve(n);
  targets.reserve(n);
  for (const auto& s : train_split) {
    if (static_cast<int>(s.features.size()) != input_dim)
      throw DimensionMismatchError("train_ensemble: inconsistent feature sizes");
    features.push_back(s.features);
    targets.push_back(s.position);
  }

  size_t subset_size = std::max<size_t>(
      1, static_cast<size_t>(std::llround(config.bootstrap_fraction * n)));

  Ensemble ens;
  ens.config = config;
  ens.master_seed = master_seed;
  Rng base(master_seed);
  for (int m = 0; m < config.members; ++m) {
    Rng rng = base.derive(static_cast<std::uint64_t>(m));
    std::uint64_t member_seed = rng.seed();
    MlpModel model(input_dim, config.hidden_widths, rng);

    std::vector<int> subset;
    if (config.with_replacement) {
      subset.resize(subset_size);
      for (auto& idx : subset) idx = static_cast<int>(rng.uniform_index(n));
    } else {
      auto raw = rng.sample_without_replacement(n, subset_size);
      subset.assign(raw.begin(), raw.end());
    }
    std::sort(subset.begin(), subset.end());

    try {
      train_mlp(model, features, targets, subset, config.train, rng);
    } catch (const NonFiniteLossError&) {
      throw DivergedMemberError(m, member_seed);
    }
    ens.members.push_back(std::move(model));
    ens.member_seeds.push_back(member_seed);
    ens.bootstrap_indices.push_back(std::move(subset));
  }
  return ens;
}

// Ensemble prediction: member-mean position, raw spread as the norm of the
// per-axis population standard deviations, and the calibrated spread.
inline PssPrediction predict(const Ensemble& ensemble,
                             const std::vector<double>& features) {
  if (ensemble.members.empty())
    throw std::invalid_argument("predict: ensemble has no members");
  if (static_cast<int>(features.size()) != ensemble.members.front().input_dim())
    throw DimensionMismatchError("predict: feature size mismatch");
  size_t m = ensemble.members.size();
  Vec3 mu{0, 0, 0};
  std::vector<Vec3> outs;
  outs.reserve(m);
  for (const auto& model : ensemble.members) {
    Vec3 y = model.forward(features);
    outs.push_back(y);
    mu = mu + y;
  }
  mu = mu * (1.0 / static_cast<double>(m));
  Vec3 var{0, 0, 0};
  for (const auto& y : outs) {
    Vec3 d = y - mu;
    var.x += d.x * d.x;
    var.y += d.y * d.y;
    var.z += d.z * d.z;
  }
  var = var * (1.0 / static_cast<double>(m));
  PssPrediction p;
  p.mu_p = mu;
  p.sigma_raw = std::sqrt(var.x + var.y + var.z);
  const auto& cal = ensemble.calibration;
  p.sigma_cal = std::max(cal.a * p.sigma_raw + cal.b, 0.0);
  return p;
}

// Fits e_p = a * sigma_raw + b on the validation split and stores it in the
// ensemble. The affine map turns raw ensemble spread into expected error.
inline Calibration calibrate_uncertainty(Ensemble& ensemble,
                                         const std::vector<PssSample>& validation) {
  if (validation.empty())
    throw std::invalid_argument("calibrate_uncertainty: empty validation split");
  std::vector<double> sigmas, errors;
  sigmas.reserve(validation.size());
  errors.reserve(validation.size());
  for (const auto& s : validation) {
    auto p = predict(ensemble, s.features);
    sigmas.push_back(p.sigma_raw);
    errors.push_back(norm(p.mu_p - s.position));
  }
  double mu_s = mean(sigmas);
  double var_s = 0.0;
  for (double s : sigmas) var_s += (s - mu_s) * (s - mu_s);
  var_s /= sigmas.size();
  if (var_s < 1e-20)
    throw DegenerateFitError(
        "calibrate_uncertainty: raw uncertainty has no variance");
  auto fit = linear_fit(sigmas, errors);
  Calibration cal;
  cal.a = fit.slope;
  cal.b = fit.intercept;
  cal.pearson_r = fit.pearson_r;
  cal.valid = true;
  ensemble.calibration = cal;
  return cal;
}

struct PssCell {
  double mean_sigma = 0.0;
  int count = 0;
  bool outside = false;  // mean above the usable-uncertainty cutoff
};

struct PssGrid {
  Vec3 origin;           // center of cell (0, 0, 0)
  double spacing = 0.01;
  int nx = 0, ny = 0, nz = 0;
  std::vector<PssCell> cells;  // index = (ix * ny + iy) * nz + iz
  int out_of_extent = 0;
  double sigma_cutoff = 0.08;

  PssCell& at(int ix, int iy, int iz) {
    return cells[(static_cast<size_t>(ix) * ny + iy) * nz + iz];
  }
  const PssCell& at(int ix, int iy, int iz) const {
    return cells[(static_cast<size_t>(ix) * ny + iy) * nz + iz];
  }
  Vec3 cell_center(int ix, int iy, int iz) const {
    return {origin.x + ix * spacing, origin.y + iy * spacing,
            origin.z + iz * spacing};
  }
};

struct PssMapConfig {
  int n_samples = 50000;
  double spacing = 0.01;
  double sigma_cutoff = 0.08;
  // Optional fixed bounds (grid-point space). When unset the grid bounds are
  // derived from the predictions themselves.
  std::optional<Vec3> bounds_min;
  std::optional<Vec3> bounds_max;
};

// Samples random feature vectors uniformly over the per-channel training
// ranges, predicts each, and bins the predicted means onto a regular grid
// storing mean calibrated uncertainty per cell.
inline PssGrid map_pss(const Ensemble& ensemble, const PssMapConfig& config,
                       std::uint64_t seed) {
  if (!ensemble.calibration.valid)
    throw NotCalibratedError("map_pss: calibrate the ensemble first");
  if (config.n_samples < 0)
    throw std::invalid_argument("map_pss: n_samples must be >= 0");
  if (config.spacing <= 0.0)
    throw std::invalid_argument("map_pss: spacing must be > 0");
  if (ensemble.feature_min.size() != ensemble.feature_max.size() ||
      ensemble.feature_min.empty())
    throw std::invalid_argument("map_pss: ensemble is missing feature ranges");

  PssGrid grid;
  grid.spacing = config.spacing;
  grid.sigma_cutoff = config.sigma_cutoff;
  if (config.n_samples == 0) return grid;

  size_t n_ch = ensemble.feature_min.size();
  Rng rng(seed);
  std::vector<PssPrediction> preds;
  preds.reserve(config.n_samples);
  std::vector<double> f(n_ch);
  for (int i = 0; i < config.n_samples; ++i) {
    for (size_t c = 0; c < n_ch; ++c)
      f[c] = rng.uniform(ensemble.feature_min[c], ensemble.feature_max[c]);
    preds.push_back(predict(ensemble, f));
  }

  Vec3 lo, hi;
  if (config.bounds_min && config.bounds_max) {
    lo = *config.bounds_min;
    hi = *config.bounds_max;
  } else {
    lo = {std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
    hi = {-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
    for (const auto& p : preds) {
      lo.x = std::min(lo.x, p.mu_p.x);
      lo.y = std::min(lo.y, p.mu_p.y);
      lo.z = std::min(lo.z, p.mu_p.z);
      hi.x = std::max(hi.x, p.mu_p.x);
      hi.y = std::max(hi.y, p.mu_p.y);
      hi.z = std::max(hi.z, p.mu_p.z);
    }
  }

  // Grid points at origin + index * spacing; predictions snap to nearest.
  auto span_cells = [&](double a, double b) {
    return static_cast<int>(std::floor((b - a) / config.spacing + 0.5)) + 1;
  };
  grid.origin = lo;
  grid.nx = span_cells(lo.x, hi.x);
  grid.ny = span_cells(lo.y, hi.y);
  grid.nz = span_cells(lo.z, hi.z);
  grid.cells.assign(static_cast<size_t>(grid.nx) * grid.ny * grid.nz, PssCell{});

  std::vector<double> sums(grid.cells.size(), 0.0);
  for (const auto& p : preds) {
    int ix = static_cast<int>(std::floor((p.mu_p.x - lo.x) / config.spacing + 0.5));
    int iy = static_cast<int>(std::floor((p.mu_p.y - lo.y) / config.spacing + 0.5));
    int iz = static_cast<int>(std::floor((p.mu_p.z - lo.z) / config.spacing + 0.5));
    if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny || iz < 0 ||
        iz >= grid.nz) {
      ++grid.out_of_extent;
      continue;
    }
    size_t idx = (static_cast<size_t>(ix) * grid.ny + iy) * grid.nz + iz;
    sums[idx] += p.sigma_cal;
    grid.cells[idx].count += 1;
  }
  for (size_t i = 0; i < grid.cells.size(); ++i) {
    if (grid.cells[i].count > 0) {
      grid.cells[i].mean_sigma = sums[i] / grid.cells[i].count;
      grid.cells[i].outside = grid.cells[i].mean_sigma > config.sigma_cutoff;
    }
  }
  return grid;
}

struct TestMetrics {
  std::vector<double> distances;  // per frame: true distance to nearest electrode
  std::vector<double> errors;     // per frame: e_p
  std::vector<double> sigmas;     // per frame: sigma_cal
  double pearson_error_sigma = 0.0;
  std::vector<double> bin_centers;
  std::vector<double> bin_mean_error;
  std::vector<int> bin_counts;
  double knee_distance = 0.0;  // change point of the two-segment error fit
};

namespace detail {

// Least-squares line through (xs, ys) returning the sum of squared residuals.
inline double segment_sse(const std::vector<double>& xs, const std::vector<double>& ys,
                          size_t begin, size_t end) {
  size_t n = end - begin;
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (size_t i = begin; i < end; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = begin; i < end; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double intercept = my - slope * mx;
  double sse = 0.0;
  for (size_t i = begin; i < end; ++i) {
    double r = ys[i] - (slope * xs[i] + intercept);
    sse += r * r;
  }
  return sse;
}

}  // namespace detail

// Per-frame error statistics on held-out data, plus the distance "knee"
// where the error departs from its near-field linear regime (the split point
// minimizing the total squared error of a two-segment linear fit).
inline TestMetrics evaluate_on_test(const Ensemble& ensemble,
                                    const std::vector<PssSample>& test,
                                    const std::vector<Vec3>& electrode_centers,
                                    double bin_width = 0.01) {
  if (test.empty()) throw std::invalid_argument("evaluate_on_test: empty test split");
  if (electrode_centers.empty())
    throw std::invalid_argument("evaluate_on_test: no electrode centers");
  if (bin_width <= 0.0)
    throw std::invalid_argument("evaluate_on_test: bin_width must be > 0");

  TestMetrics metrics;
  for (const auto& s : test) {
    auto p = predict(ensemble, s.features);
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : electrode_centers)
      d = std::min(d, distance(s.position, c));
    metrics.distances.push_back(d);
    metrics.errors.push_back(norm(p.mu_p - s.position));
    metrics.sigmas.push_back(p.sigma_cal);
  }
  metrics.pearson_error_sigma =
      metrics.errors.size() >= 2
          ? pearson_correlation(metrics.errors, metrics.sigmas)
          : 0.0;

  double d_max = *std::max_element(metrics.distances.begin(), metrics.distances.end());
  int n_bins = static_cast<int>(std::floor(d_max / bin_width)) + 1;
  std::vector<double> sums(n_bins, 0.0);
  std::vector<int> counts(n_bins, 0);
  for (size_t i = 0; i < metrics.distances.size(); ++i) {
    int b = std::min(n_bins - 1,
                     static_cast<int>(std::floor(metrics.distances[i] / bin_width)));
    sums[b] += metrics.errors[i];
    counts[b] += 1;
  }
  for (int b = 0; b < n_bins; ++b) {
    if (counts[b] == 0) continue;
    metrics.bin_centers.push_back((b + 0.5) * bin_width);
    metrics.bin_mean_error.push_back(sums[b] / counts[b]);
    metrics.bin_counts.push_back(counts[b]);
  }

  size_t nb = metrics.bin_centers.size();
  if (nb >= 4) {
    double best = std::numeric_limits<double>::infinity();
    size_t best_split = 2;
    for (size_t split = 2; split + 2 <= nb; ++split) {
      double sse =
          detail::segment_sse(metrics.bin_centers, metrics.bin_mean_error, 0, split) +
          detail::segment_sse(metrics.bin_centers, metrics.bin_mean_error, split, nb);
      if (sse < best) {
        best = sse;
        best_split = split;
      }
    }
    metrics.knee_distance = metrics.bin_centers[best_split];
  } else if (nb > 0) {
    metrics.knee_distance = metrics.bin_centers.back();
  }
  return metrics;
}

// Convenience for range-dependent error comparisons: medians of e_p for
// frames inside and beyond a distance limit.
struct RangeSplitMedians {
  double in_range = 0.0;
  double beyond = 0.0;
  int n_in = 0;
  int n_beyond = 0;
};

inline RangeSplitMedians median_error_by_range(const TestMetrics& metrics,
                                               double range_limit) {
  std::vector<double> in, out;
  for (size_t i = 0; i < metrics.distances.size(); ++i) {
    (metrics.distances[i] <= range_limit ? in : out).push_back(metrics.errors[i]);
  }
  RangeSplitMedians r;
  r.n_in = static_cast<int>(in.size());
  r.n_beyond = static_cast<int>(out.size());
  if (!in.empty()) r.in_range = median(in);
  if (!out.empty()) r.beyond = median(out);
  return r;
}

}  // namespace gentact
