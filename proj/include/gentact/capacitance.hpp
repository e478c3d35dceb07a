// Forward model of self-capacitance sensing: distance-coupling power law,
// parasitic coupling between electrodes, the RC charge-counter measurement,
// environment drift and noise, and the slow PID baseline compensator.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gentact/layout.hpp"
#include "gentact/math.hpp"
#include "gentact/rng.hpp"

namespace gentact {

struct BelowBaselineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Contact singularity clamp for the coupling law.
inline constexpr double kDistanceFloor = 1e-4;  // meters

inline constexpr double kLn2 = 0.69314718055994530942;

// RC measurement parameters for one sensor channel. The charge threshold is
// fixed at half the supply voltage, which is where the ln 2 in the
// counter-capacitance conversion comes from.
struct CircuitParams {
  int samples_averaged = 16;      // n
  double cycle_frequency = 1e6;   // f, Hz
  double resistance = 1e6;        // R, ohms (wire + base resistor)

  static constexpr double v_ratio_threshold = 0.5;

  void validate() const {
    if (samples_averaged < 1)
      throw std::invalid_argument("CircuitParams: samples_averaged must be >= 1");
    if (cycle_frequency <= 0.0)
      throw std::invalid_argument("CircuitParams: cycle_frequency must be > 0");
    if (resistance <= 0.0)
      throw std::invalid_argument("CircuitParams: resistance must be > 0");
  }

  // counts per farad
  double counts_per_farad() const {
    return samples_averaged * cycle_frequency * resistance * kLn2;
  }
};

// Tuned power-law coupling C = k / d^w. k = epsilon * area with w = 1 is the
// parallel-plate special case.
struct CouplingParams {
  double k = 1e-12;  // F * m^w
  double w = 1.0;

  void validate() const {
    if (k <= 0.0) throw std::invalid_argument("CouplingParams: k must be > 0");
    if (w <= 0.0 || w > 1.5)
      throw std::invalid_argument("CouplingParams: w must be in (0, 1.5]");
  }
};

inline CouplingParams parallel_plate_coupling(double epsilon, double area) {
  return CouplingParams{epsilon * area, 1.0};
}

struct EnvironmentModel {
  double c_env = 20e-12;                 // baseline capacitance, broadcast
  std::vector<double> c_env_per_sensor;  // optional per-sensor override
  double drift_rate = 0.0;               // random-walk scale, F per sqrt(s)
  double noise_sigma = 0.0;              // counter noise std, counts
  double parasitic_gain = 0.0;           // gamma_0
  double parasitic_decay = 0.05;         // lambda, meters

  void validate() const {
    if (c_env < 0.0 || drift_rate < 0.0 || noise_sigma < 0.0 ||
        parasitic_gain < 0.0 || parasitic_decay < 0.0)
      throw std::invalid_argument("EnvironmentModel: fields must be non-negative");
  }

  double baseline_for(size_t sensor) const {
    return sensor < c_env_per_sensor.size() ? c_env_per_sensor[sensor] : c_env;
  }
};

// One timestamped measurement of every sensor plus simulation ground truth.
struct CapacitanceFrame {
  double t = 0.0;
  std::vector<std::int64_t> counts;
  Vec3 truth_object_position;
  std::vector<double> truth_capacitances;
};

// One sensor channel of a skin unit: electrode geometry, series resistance,
// and the generative coupling law.
struct SensorChannel {
  Electrode electrode;
  double wire_length = 0.0;
  double resistance = 1e6;  // R_w + R_b
  CouplingParams coupling;
};

struct SkinUnit {
  std::string link_frame = "world";
  Mat4 origin;  // skin-unit origin frame, world coordinates
  int samples_averaged = 16;
  double cycle_frequency = 1e6;
  std::vector<SensorChannel> sensors;

  CircuitParams circuit(size_t i) const {
    return CircuitParams{samples_averaged, cycle_frequency, sensors.at(i).resistance};
  }
};

// Coupling capacitance to a grounded sphere: C_t = k / d^w with d measured
// from the electrode center to the object surface, clamped at the floor.
inline double coupling_capacitance(const Electrode& electrode, const Vec3& object_center,
                                   double object_radius, const CouplingParams& cp) {
  double d = distance(object_center, electrode.center) - object_radius;
  d = std::max(d, kDistanceFloor);
  return cp.k / std::pow(d, cp.w);
}

// Symmetric inter-sensor coupling weights, gamma_ij = gamma_0 * exp(-d/lambda),
// zero diagonal. Sensor i picks up sum_j gamma_ij * C_t(j).
inline std::vector<double> parasitic_matrix(const std::vector<Electrode>& electrodes,
                                            const EnvironmentModel& env) {
  if (electrodes.empty())
    throw std::invalid_argument("parasitic_matrix: need at least one electrode");
  size_t n = electrodes.size();
  std::vector<double> gamma(n * n, 0.0);
  if (env.parasitic_gain == 0.0) return gamma;
  if (env.parasitic_decay <= 0.0)
    throw std::invalid_argument("parasitic_matrix: parasitic_decay must be > 0");
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double d = distance(electrodes[i].center, electrodes[j].center);
      double g = env.parasitic_gain * std::exp(-d / env.parasitic_decay);
      gamma[i * n + j] = g;
      gamma[j * n + i] = g;
    }
  return gamma;
}

// m = round(C * n * f * R * ln 2): the counter accumulates n half-charge
// cycles of t = R C ln 2 scaled by the cycle frequency.
inline std::int64_t counts_from_capacitance(double capacitance,
                                            const CircuitParams& circuit) {
  if (capacitance < 0.0)
    throw std::invalid_argument("counts_from_capacitance: capacitance must be >= 0");
  circuit.validate();
  return std::llround(capacitance * circuit.counts_per_farad());
}

inline double capacitance_from_counts(std::int64_t counts, const CircuitParams& circuit) {
  if (counts < 0)
    throw std::invalid_argument("capacitance_from_counts: counts must be >= 0");
  circuit.validate();
  return static_cast<double>(counts) / circuit.counts_per_farad();
}

// Inverts the coupling law on a baseline-subtracted reading.
inline double estimate_distance(std::int64_t counts, const CircuitParams& circuit,
                                const CouplingParams& cp, double baseline_counts) {
  circuit.validate();
  cp.validate();
  double signal = static_cast<double>(counts) - baseline_counts;
  if (signal <= 0.0)
    throw BelowBaselineError("estimate_distance: reading at or below baseline");
  double c_signal = signal / circuit.counts_per_farad();
  return std::pow(cp.k / c_signal, 1.0 / cp.w);
}

struct TimedWaypoint {
  double t = 0.0;
  Vec3 position;
};

inline Vec3 interpolate_waypoints(const std::vector<TimedWaypoint>& path, double t) {
  if (path.empty()) throw std::invalid_argument("interpolate_waypoints: empty path");
  if (t <= path.front().t) return path.front().position;
  if (t >= path.back().t) return path.back().position;
  for (size_t i = 1; i < path.size(); ++i) {
    if (t <= path[i].t) {
      double span = path[i].t - path[i - 1].t;
      double a = span > 0.0 ? (t - path[i - 1].t) / span : 1.0;
      return path[i - 1].position + (path[i].position - path[i - 1].position) * a;
    }
  }
  return path.back().position;
}

// Full forward simulation of one object trajectory over a skin unit.
// Per frame, per sensor i: C_i = c_env_i(t) + C_t(i) + sum_j gamma_ij C_t(j);
// counts are the quantized counter value plus Gaussian counter noise, clamped
// at zero. The environment baseline random-walks between frames.
inline std::vector<CapacitanceFrame> simulate_trajectory(
    const SkinUnit& skin, const std::vector<TimedWaypoint>& object_path,
    double object_radius, const EnvironmentModel& env, std::uint64_t seed,
    double frame_rate = 20.0) {
  if (object_path.empty())
    throw std::invalid_argument("simulate_trajectory: empty object path");
  for (size_t i = 1; i < object_path.size(); ++i)
    if (object_path[i].t <= object_path[i - 1].t)
      throw std::invalid_argument(
          "simulate_trajectory: waypoint timestamps must be strictly increasing");
  if (frame_rate <= 0.0)
    throw std::invalid_argument("simulate_trajectory: frame_rate must be > 0");
  env.validate();
  size_t ns = skin.sensors.size();
  if (ns == 0) throw std::invalid_argument("simulate_trajectory: skin has no sensors");

  std::vector<Electrode> electrodes;
  for (const auto& s : skin.sensors) electrodes.push_back(s.electrode);
  auto gamma = parasitic_matrix(electrodes, env);

  std::vector<double> c_env(ns);
  for (size_t i = 0; i < ns; ++i) c_env[i] = env.baseline_for(i);

  Rng rng(seed);
  double dt = 1.0 / frame_rate;
  double t0 = object_path.front().t;
  double t_end = object_path.back().t;
  int n_frames = static_cast<int>(std::floor((t_end - t0) / dt)) + 1;

  std::vector<CapacitanceFrame> frames;
  frames.reserve(n_frames);
  std::vector<double> c_touch(ns), c_total(ns);
  for (int fidx = 0; fidx < n_frames; ++fidx) {
    double t = t0 + fidx * dt;
    Vec3 obj = interpolate_waypoints(object_path, t);
    for (size_t i = 0; i < ns; ++i)
      c_touch[i] =
          coupling_capacitance(skin.sensors[i].electrode, obj, object_radius,
                               skin.sensors[i].coupling);
    CapacitanceFrame frame;
    frame.t = t;
    frame.truth_object_position = obj;
    for (size_t i = 0; i < ns; ++i) {
      double parasitic = 0.0;
      for (size_t j = 0; j < ns; ++j) parasitic += gamma[i * ns + j] * c_touch[j];
      c_total[i] = c_env[i] + c_touch[i] + parasitic;
      auto quantized = counts_from_capacitance(c_total[i], skin.circuit(i));
      double noisy = static_cast<double>(quantized) +
                     (env.noise_sigma > 0.0 ? rng.normal(0.0, env.noise_sigma) : 0.0);
      frame.counts.push_back(std::max<std::int64_t>(0, std::llround(noisy)));
      frame.truth_capacitances.push_back(c_total[i]);
    }
    frames.push_back(std::move(frame));
    if (env.drift_rate > 0.0) {
      double step_sigma = env.drift_rate * std::sqrt(dt);
      for (size_t i = 0; i < ns; ++i)
        c_env[i] = std::max(0.0, c_env[i] + rng.normal(0.0, step_sigma));
    }
  }
  return frames;
}

// Slowly adapting PID tracker that zeros out lingering baseline so transient
// approaches pass through. Output is input minus the tracked baseline.
class DriftCompensator {
 public:
  DriftCompensator(double kp, double ki, double kd) : kp_(kp), ki_(ki), kd_(kd) {
    if (kp < 0.0 || ki < 0.0 || kd < 0.0)
      throw std::invalid_argument("DriftCompensator: gains must be >= 0");
  }

  // Gains from an adaptation timescale: baseline converges on constant input
  // with that time constant, much slower than object interactions.
  static DriftCompensator from_timescale(double timescale_s) {
    if (timescale_s <= 0.0)
      throw std::invalid_argument("DriftCompensator: timescale must be > 0");
    return DriftCompensator(1.0 / timescale_s, 0.1 / (timescale_s * timescale_s), 0.0);
  }

  double step(double input, double dt) {
    if (!initialized_) {
      baseline_ = input;
      prev_error_ = 0.0;
      initialized_ = true;
    }
    double error = input - baseline_;
    integral_ += error * dt;
    double derivative = dt > 0.0 ? (error - prev_error_) / dt : 0.0;
    baseline_ += dt * (kp_ * error + ki_ * integral_ + kd_ * derivative);
    prev_error_ = error;
    return input - baseline_;
  }

  double baseline() const { return baseline_; }
  void reset() {
    initialized_ = false;
    integral_ = 0.0;
  }

 private:
  double kp_, ki_, kd_;
  double baseline_ = 0.0;
  double integral_ = 0.0;
  double prev_error_ = 0.0;
  bool initialized_ = false;
};

}  // namespace gentact
