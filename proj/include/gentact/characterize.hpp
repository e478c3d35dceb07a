// Sensor characterization from recorded frames: calibration-window noise
// baselines, nearest-sensor labeling, approach isolation against the noise
// floor, log-space power-law fitting, SNR, and analytic detection range.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gentact/capacitance.hpp"
#include "gentact/layout.hpp"
#include "gentact/math.hpp"

namespace gentact {

struct EmptyApproachError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooFewSamplesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoDetectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateBaselineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mean and spread of a sensor's inactive signal, measured over the
// calibration windows at both ends of a recording.
struct NoiseBaseline {
  double mu_n = 0.0;
  double sigma_n = 0.0;
  double window_s = 2.0;
};

// Pools the samples of the two end windows (first and last window_s seconds)
// and reports their mean and sample standard deviation.
inline NoiseBaseline noise_baseline(const std::vector<CapacitanceFrame>& frames,
                                    size_t sensor, double window_s = 2.0) {
  if (frames.empty()) throw std::invalid_argument("noise_baseline: no frames");
  if (window_s <= 0.0)
    throw std::invalid_argument("noise_baseline: window_s must be > 0");
  double t0 = frames.front().t;
  double t1 = frames.back().t;
  std::vector<double> samples;
  for (const auto& f : frames) {
    if (f.t <= t0 + window_s || f.t >= t1 - window_s)
      samples.push_back(static_cast<double>(f.counts.at(sensor)));
  }
  if (samples.size() < 2)
    throw std::invalid_argument("noise_baseline: calibration windows too short");
  NoiseBaseline nb;
  nb.mu_n = mean(samples);
  nb.sigma_n = stddev_sample(samples);
  nb.window_s = window_s;
  if (nb.sigma_n <= 0.0)
    throw DegenerateBaselineError(
        "noise_baseline: calibration window has zero variance");
  return nb;
}

// Per-frame label: the sensor whose electrode center is closest to the
// ground-truth object position; ties go to the lowest id.
inline std::vector<int> assign_nearest_sensor(
    const std::vector<CapacitanceFrame>& frames,
    const std::vector<Electrode>& electrodes) {
  if (frames.empty() || electrodes.empty())
    throw std::invalid_argument("assign_nearest_sensor: empty input");
  std::vector<int> labels;
  labels.reserve(frames.size());
  for (const auto& f : frames) {
    int best = electrodes.front().id;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& e : electrodes) {
      double d = norm_squared(f.truth_object_position - e.center);
      if (d < best_d || (d == best_d && e.id < best)) {
        best_d = d;
        best = e.id;
      }
    }
    labels.push_back(best);
  }
  return labels;
}

struct ApproachSample {
  double d = 0.0;         // electrode center to object surface, meters
  double c_signal = 0.0;  // baseline-subtracted capacitance, farads
};

// Keeps the frames labeled with this sensor, drops everything farther than
// the closest noise-floor crossing (counts <= mu_n + floor_multiplier *
// sigma_n), and converts what survives to baseline-subtracted capacitance.
inline std::vector<ApproachSample> isolate_approach(
    const std::vector<CapacitanceFrame>& frames, const std::vector<int>& labels,
    int sensor_id, size_t sensor_index, const Electrode& electrode,
    const NoiseBaseline& baseline, const CircuitParams& circuit,
    double object_radius, double floor_multiplier = 1.0) {
  if (frames.size() != labels.size())
    throw std::invalid_argument("isolate_approach: labels must match frames");
  circuit.validate();
  double floor_counts = baseline.mu_n + floor_multiplier * baseline.sigma_n;

  struct Raw {
    double d;
    double counts;
  };
  std::vector<Raw> raws;
  for (size_t i = 0; i < frames.size(); ++i) {
    if (labels[i] != sensor_id) continue;
    double d =
        distance(frames[i].truth_object_position, electrode.center) - object_radius;
    if (d <= 0.0) continue;  // contact or penetration: not usable for fitting
    raws.push_back({d, static_cast<double>(frames[i].counts.at(sensor_index))});
  }

  double d_nf = std::numeric_limits<double>::infinity();
  for (const auto& r : raws)
    if (r.counts <= floor_counts) d_nf = std::min(d_nf, r.d);

  std::vector<ApproachSample> out;
  for (const auto& r : raws) {
    if (r.d > d_nf) continue;
    double c = (r.counts - baseline.mu_n) / circuit.counts_per_farad();
    if (c <= 0.0) continue;
    out.push_back({r.d, c});
  }
  if (out.empty())
    throw EmptyApproachError("isolate_approach: no samples above the noise floor");
  return out;
}

struct PowerLawFit {
  int sensor_id = -1;
  double k = 0.0;  // F * m^w
  double w = 0.0;
  double pearson_r = 0.0;
  int n_samples = 0;
  bool w_outside_band = false;  // outside the expected [0.4, 1) sensitivity band
};

inline constexpr int kMinFitSamples = 5;

namespace detail {

inline PowerLawFit power_law_from_logfit(double slope, double intercept,
                                         double pearson_r, int n, int sensor_id) {
  PowerLawFit fit;
  fit.sensor_id = sensor_id;
  fit.w = -slope;
  fit.k = std::exp(intercept);
  fit.pearson_r = pearson_r;
  fit.n_samples = n;
  fit.w_outside_band = !(fit.w >= 0.4 && fit.w < 1.0);
  return fit;
}

}  // namespace detail

// Ordinary least squares of log C on log d: slope = -w, intercept = log k.
inline PowerLawFit fit_power_law(const std::vector<ApproachSample>& samples,
                                 int sensor_id = -1) {
  if (static_cast<int>(samples.size()) < kMinFitSamples)
    throw TooFewSamplesError("fit_power_law: need at least 5 samples");
  std::vector<double> xs, ys;
  xs.reserve(samples.size());
  ys.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.d <= 0.0 || s.c_signal <= 0.0)
      throw std::invalid_argument("fit_power_law: samples must have d > 0, C > 0");
    xs.push_back(std::log(s.d));
    ys.push_back(std::log(s.c_signal));
  }
  auto lf = linear_fit(xs, ys);
  return detail::power_law_from_logfit(lf.slope, lf.intercept, lf.pearson_r,
                                       static_cast<int>(samples.size()), sensor_id);
}

// Weighted variant: minimizes sum_i weight_i * residual_i^2 in log space.
// Weights proportional to per-sample SNR emphasize the near-field samples.
inline PowerLawFit fit_power_law(const std::vector<ApproachSample>& samples,
                                 const std::vector<double>& weights,
                                 int sensor_id = -1) {
  if (static_cast<int>(samples.size()) < kMinFitSamples)
    throw TooFewSamplesError("fit_power_law: need at least 5 samples");
  if (weights.size() != samples.size())
    throw std::invalid_argument("fit_power_law: weights must match samples");
  double sw = 0.0, swx = 0.0, swy = 0.0;
  std::vector<double> xs(samples.size()), ys(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].d <= 0.0 || samples[i].c_signal <= 0.0)
      throw std::invalid_argument("fit_power_law: samples must have d > 0, C > 0");
    if (weights[i] <= 0.0)
      throw std::invalid_argument("fit_power_law: weights must be > 0");
    xs[i] = std::log(samples[i].d);
    ys[i] = std::log(samples[i].c_signal);
    sw += weights[i];
    swx += weights[i] * xs[i];
    swy += weights[i] * ys[i];
  }
  double mx = swx / sw, my = swy / sw;
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    sxy += weights[i] * (xs[i] - mx) * (ys[i] - my);
    sxx += weights[i] * (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx <= 0.0) throw std::invalid_argument("fit_power_law: degenerate distances");
  double slope = sxy / sxx;
  return detail::power_law_from_logfit(slope, my - slope * mx,
                                       pearson_correlation(xs, ys),
                                       static_cast<int>(samples.size()), sensor_id);
}

// Per-sample signal-to-noise ratio, |mu_n - m| / sigma_n.
inline std::vector<double> snr_series(const std::vector<std::int64_t>& counts,
                                      const NoiseBaseline& baseline) {
  if (baseline.sigma_n <= 0.0)
    throw std::invalid_argument("snr_series: sigma_n must be > 0");
  std::vector<double> out;
  out.reserve(counts.size());
  for (auto m : counts)
    out.push_back(std::abs(baseline.mu_n - static_cast<double>(m)) /
                  baseline.sigma_n);
  return out;
}

// Distance at which the fitted signal crosses the SNR threshold, solved
// analytically: the counts-domain signal is beta * k / d^w with beta the
// counter's counts-per-farad gain, so d* = (beta * k / (threshold *
// sigma_n))^(1/w).
inline double detection_range(const PowerLawFit& fit, const NoiseBaseline& baseline,
                              const CircuitParams& circuit, double threshold = 3.5) {
  circuit.validate();
  if (fit.k <= 0.0 || fit.w <= 0.0)
    throw std::invalid_argument("detection_range: fit must have k > 0, w > 0");
  if (baseline.sigma_n <= 0.0)
    throw std::invalid_argument("detection_range: sigma_n must be > 0");
  if (threshold <= 0.0)
    throw std::invalid_argument("detection_range: threshold must be > 0");
  double beta = circuit.counts_per_farad();
  double d_star = std::pow(beta * fit.k / (threshold * baseline.sigma_n), 1.0 / fit.w);
  if (d_star < kDistanceFloor)
    throw NoDetectionError("detection_range: threshold is never reached");
  return d_star;
}

struct SensorCharacterization {
  int sensor_id = -1;
  double area = 0.0;
  double wire_length = 0.0;
  PowerLawFit fit;
  NoiseBaseline baseline;
  double max_snr = 0.0;  // maximum instantaneous SNR over the recording
  std::optional<double> detection_range_m;
};

struct CharacterizationReport {
  std::vector<SensorCharacterization> sensors;
};

struct CharacterizeConfig {
  double window_s = 2.0;
  double noise_floor_multiplier = 1.0;
  double snr_threshold = 3.5;
  double object_radius = 0.0125;
};

// Full per-sensor analysis of one recording over a skin unit.
inline CharacterizationReport characterize_skin(
    const SkinUnit& skin, const std::vector<CapacitanceFrame>& frames,
    const CharacterizeConfig& config = {}) {
  if (frames.empty()) throw std::invalid_argument("characterize_skin: no frames");
  std::vector<Electrode> electrodes;
  for (const auto& s : skin.sensors) electrodes.push_back(s.electrode);
  auto labels = assign_nearest_sensor(frames, electrodes);

  CharacterizationReport report;
  for (size_t i = 0; i < skin.sensors.size(); ++i) {
    const auto& sensor = skin.sensors[i];
    SensorCharacterization sc;
    sc.sensor_id = sensor.electrode.id;
    sc.area = sensor.electrode.area;
    sc.wire_length = sensor.wire_length;
    sc.baseline = noise_baseline(frames, i, config.window_s);

    std::vector<std::int64_t> counts;
    counts.reserve(frames.size());
    for (const auto& f : frames) counts.push_back(f.counts.at(i));
    auto snrs = snr_series(counts, sc.baseline);
    sc.max_snr = *std::max_element(snrs.begin(), snrs.end());

    auto circuit = skin.circuit(i);
    auto samples = isolate_approach(frames, labels, sc.sensor_id, i,
                                    sensor.electrode, sc.baseline, circuit,
                                    config.object_radius,
                                    config.noise_floor_multiplier);
    sc.fit = fit_power_law(samples, sc.sensor_id);
    try {
      sc.detection_range_m =
          detection_range(sc.fit, sc.baseline, circuit, config.snr_threshold);
    } catch (const NoDetectionError&) {
      sc.detection_range_m = std::nullopt;
    }
    report.sensors.push_back(std::move(sc));
  }
  return report;
}

struct AreaRangeRow {
  int sensor_id = -1;
  double area = 0.0;
  double detection_range_m = 0.0;
};

struct AreaRangeReport {
  std::vector<AreaRangeRow> rows;  // ascending by area
  double pearson_r = 0.0;          // correlation of area with detection range
};

// Sorts sensors by electrode area and correlates area against detection
// range. Sensors with no detection range contribute a range of zero.
inline AreaRangeReport area_vs_range_report(const CharacterizationReport& report) {
  if (report.sensors.size() < 3)
    throw std::invalid_argument("area_vs_range_report: need at least 3 sensors");
  AreaRangeReport out;
  for (const auto& sc : report.sensors)
    out.rows.push_back(
        {sc.sensor_id, sc.area, sc.detection_range_m.value_or(0.0)});
  std::sort(out.rows.begin(), out.rows.end(),
            [](const AreaRangeRow& a, const AreaRangeRow& b) {
              if (a.area != b.area) return a.area < b.area;
              return a.sensor_id < b.sensor_id;
            });
  std::vector<double> areas, ranges;
  for (const auto& r : out.rows) {
    areas.push_back(r.area);
    ranges.push_back(r.detection_range_m);
  }
  out.pearson_r = pearson_correlation(areas, ranges);
  return out;
}

}  // namespace gentact
