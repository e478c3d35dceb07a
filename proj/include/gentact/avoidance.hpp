// Reactive collision avoidance driven by capacitive proximity readings:
// obstacle point extraction along sensor normals, a repulsive-vector
// velocity controller with speed scaling, and a closed-loop circle-tracing
// scenario with a scheduled intruder.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gentact/capacitance.hpp"
#include "gentact/characterize.hpp"
#include "gentact/kinematics.hpp"
#include "gentact/math.hpp"
#include "gentact/rng.hpp"

namespace gentact {

struct ObstacleEstimate {
  int sensor_id = 0;
  double distance = 0.0;  // meters from electrode surface along the normal
  Vec3 world_point;
  double confidence = 0.0;  // signal-to-noise ratio of the reading
};

// Converts one frame of baseline-referenced counts into obstacle points.
// Only sensors whose excess over the noise mean clears the threshold (in
// sigma units, signed: readings below baseline never count) yield estimates.
inline std::vector<ObstacleEstimate> extract_obstacles(
    const std::vector<double>& counts, const std::vector<SensorWorldPose>& poses,
    const std::vector<PowerLawFit>& fits,
    const std::vector<NoiseBaseline>& baselines,
    const std::vector<CircuitParams>& circuits, double snr_threshold = 3.5) {
  size_t n = counts.size();
  if (poses.size() != n || fits.size() != n || baselines.size() != n ||
      circuits.size() != n)
    throw std::invalid_argument("extract_obstacles: per-sensor array size mismatch");
  std::vector<ObstacleEstimate> obstacles;
  for (size_t i = 0; i < n; ++i) {
    if (baselines[i].sigma_n <= 0.0)
      throw DegenerateBaselineError("extract_obstacles: zero noise spread");
    double excess = counts[i] - baselines[i].mu_n;
    double snr = excess / baselines[i].sigma_n;
    if (snr < snr_threshold) continue;
    double c_signal = excess / circuits[i].counts_per_farad();
    ObstacleEstimate est;
    est.sensor_id = poses[i].electrode_id;
    est.distance = std::pow(fits[i].k / c_signal, 1.0 / fits[i].w);
    est.world_point = poses[i].center + poses[i].normal * est.distance;
    est.confidence = snr;
    obstacles.push_back(est);
  }
  return obstacles;
}

inline std::vector<ObstacleEstimate> extract_obstacles(
    const CapacitanceFrame& frame, const std::vector<SensorWorldPose>& poses,
    const std::vector<PowerLawFit>& fits,
    const std::vector<NoiseBaseline>& baselines,
    const std::vector<CircuitParams>& circuits, double snr_threshold = 3.5) {
  std::vector<double> counts(frame.counts.begin(), frame.counts.end());
  return extract_obstacles(counts, poses, fits, baselines, circuits, snr_threshold);
}

struct AvoidanceGains {
  double k_rep = 0.05;        // m/s of repulsion at zero distance, per obstacle
  double d_safe = 0.10;       // m; no influence at or beyond this distance
  double s_min = 0.0;         // floor of the speed-scaling factor
  double snr_threshold = 3.5;

  void validate() const {
    if (k_rep < 0.0 || d_safe <= 0.0 || s_min < 0.0 || s_min > 1.0)
      throw std::invalid_argument(
          "AvoidanceGains: need k_rep >= 0, d_safe > 0, s_min in [0, 1]");
  }
};

// Repulsive-vector controller: scales the desired velocity by the proximity
// of the nearest obstacle and adds a push away from each estimated point,
// with linear falloff that vanishes continuously at d_safe.
inline Vec3 avoidance_command(const Vec3& v_des,
                              const std::vector<ObstacleEstimate>& obstacles,
                              const Vec3& end_effector,
                              const AvoidanceGains& gains) {
  gains.validate();
  if (obstacles.empty()) return v_des;
  double min_d = std::numeric_limits<double>::infinity();
  Vec3 repulsion{0, 0, 0};
  for (const auto& obs : obstacles) {
    min_d = std::min(min_d, obs.distance);
    double falloff = std::max(0.0, 1.0 - obs.distance / gains.d_safe);
    if (falloff <= 0.0) continue;
    Vec3 away = end_effector - obs.world_point;
    double len = norm(away);
    if (len < 1e-12) continue;  // point coincides with the effector: no direction
    repulsion += away * (gains.k_rep * falloff / len);
  }
  double s = std::clamp(min_d / gains.d_safe, gains.s_min, 1.0);
  return v_des * s + repulsion;
}

struct IntruderEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  Vec3 position;
  double radius = 0.02;
};

struct CircleScenarioConfig {
  Vec3 center{0.0, 0.0, 0.2};
  double radius = 0.10;
  double period_s = 8.0;    // time per revolution
  double duration_s = 20.0;
  double dt = 0.05;
  double track_gain = 2.0;  // 1/s proportional pull toward the desired point
  double calibration_s = 2.0;
  double drift_timescale_s = 60.0;
  double object_radius = 0.0125;  // intruder radius default, per event override
  bool avoidance_enabled = true;
  AvoidanceGains gains;
  std::vector<IntruderEvent> intruders;

  Vec3 desired_position(double t) const {
    double theta = 2.0 * 3.141592653589793 * t / period_s;
    return {center.x + radius * std::cos(theta),
            center.y + radius * std::sin(theta), center.z};
  }
  double cruise_speed() const {
    return 2.0 * 3.141592653589793 * radius / period_s;
  }
};

struct ScenarioFrame {
  double t = 0.0;
  Vec3 desired;
  Vec3 actual;
  Vec3 v_cmd;
  double speed = 0.0;
  int n_obstacles = 0;
  double min_obstacle_distance = -1.0;  // sensed; -1 when nothing detected
  double clearance = -1.0;  // true distance to nearest active intruder surface
};

struct ScenarioLog {
  std::vector<ScenarioFrame> frames;
  std::vector<NoiseBaseline> baselines;
  double cruise_speed = 0.0;
  double min_clearance = std::numeric_limits<double>::infinity();
  double min_speed_during_intrusion = std::numeric_limits<double>::infinity();
};

// Closed-loop kinematic simulation of a point robot tracing a circle while
// carrying a skin unit. Each frame: synthesize sensor counts from the active
// intruders, drift-compensate, extract obstacles, form the avoidance
// command, and integrate. The opening calibration window learns the noise
// baselines; intruders may only appear after it.
inline ScenarioLog run_circle_scenario(const SkinUnit& skin,
                                       const EnvironmentModel& env,
                                       const std::vector<PowerLawFit>& fits,
                                       const CircleScenarioConfig& config,
                                       std::uint64_t seed) {
  size_t ns = skin.sensors.size();
  if (ns == 0) throw std::invalid_argument("run_circle_scenario: skin has no sensors");
  if (fits.size() != ns)
    throw std::invalid_argument("run_circle_scenario: need one power-law fit per sensor");
  if (config.dt <= 0.0) throw std::invalid_argument("run_circle_scenario: dt must be > 0");
  if (config.duration_s <= config.calibration_s)
    throw std::invalid_argument(
        "run_circle_scenario: duration must exceed the calibration window");
  config.gains.validate();
  for (const auto& ev : config.intruders)
    if (ev.t_start < config.calibration_s)
      throw std::invalid_argument(
          "run_circle_scenario: intruders may not overlap the calibration window");

  std::vector<Electrode> local_electrodes;
  std::vector<CircuitParams> circuits;
  for (size_t i = 0; i < ns; ++i) {
    local_electrodes.push_back(skin.sensors[i].electrode);
    circuits.push_back(skin.circuit(i));
  }
  // Relative sensor geometry is rigid under the point robot's translation,
  // so inter-sensor coupling weights are constant.
  std::vector<double> gamma = parasitic_matrix(local_electrodes, env);

  Rng rng(seed);
  std::vector<DriftCompensator> comps(
      ns, DriftCompensator::from_timescale(config.drift_timescale_s));
  std::vector<double> drift(ns, 0.0);
  double drift_step_sigma = env.drift_rate * std::sqrt(config.dt);

  ScenarioLog log;
  log.cruise_speed = config.cruise_speed();
  std::vector<std::vector<double>> calibration_counts(ns);
  bool calibrated = false;

  Vec3 p = config.desired_position(0.0);
  int n_frames = static_cast<int>(std::floor(config.duration_s / config.dt)) + 1;
  std::vector<double> c_touch(ns), compensated(ns);
  for (int n = 0; n < n_frames; ++n) {
    double t = n * config.dt;

    // Close the calibration window before the counts of this frame exist, so
    // an intruder starting exactly at the boundary can never leak into the
    // baseline statistics.
    if (!calibrated && t >= config.calibration_s) {
      if (calibration_counts[0].size() < 2)
        throw std::invalid_argument(
            "run_circle_scenario: calibration window shorter than two frames");
      for (size_t i = 0; i < ns; ++i) {
        NoiseBaseline nb;
        nb.mu_n = mean(calibration_counts[i]);
        nb.sigma_n = stddev_sample(calibration_counts[i]);
        nb.window_s = config.calibration_s;
        if (nb.sigma_n <= 0.0)
          throw DegenerateBaselineError(
              "run_circle_scenario: calibration produced zero noise spread");
        log.baselines.push_back(nb);
      }
      calibrated = true;
    }

    // Sensor world poses for the point robot: pure translation.
    std::vector<SensorWorldPose> poses(ns);
    for (size_t i = 0; i < ns; ++i) {
      poses[i].sensor_index = static_cast<int>(i);
      poses[i].electrode_id = local_electrodes[i].id;
      poses[i].center = p + local_electrodes[i].center;
      poses[i].normal = local_electrodes[i].normal;
    }

    // Object coupling from every active intruder.
    std::vector<const IntruderEvent*> active;
    for (const auto& ev : config.intruders)
      if (t >= ev.t_start && t <= ev.t_end) active.push_back(&ev);
    for (size_t i = 0; i < ns; ++i) {
      c_touch[i] = 0.0;
      for (const auto* ev : active) {
        Electrode world = local_electrodes[i];
        world.center = poses[i].center;
        c_touch[i] += coupling_capacitance(world, ev->position, ev->radius,
                                           skin.sensors[i].coupling);
      }
    }

    // Counts: environment baseline + drift + touch + parasitic pickup,
    // quantized then jittered, floored at zero.
    for (size_t i = 0; i < ns; ++i) {
      double c_total = env.baseline_for(i) + drift[i] + c_touch[i];
      for (size_t j = 0; j < ns; ++j) c_total += gamma[i * ns + j] * c_touch[j];
      c_total = std::max(c_total, 0.0);
      double quantized =
          static_cast<double>(counts_from_capacitance(c_total, circuits[i]));
      double noisy = quantized + rng.normal(0.0, env.noise_sigma);
      double raw = std::max(0.0, static_cast<double>(std::llround(noisy)));
      compensated[i] = comps[i].step(raw, config.dt);
      if (!calibrated) calibration_counts[i].push_back(raw);
    }

    std::vector<ObstacleEstimate> obstacles;
    if (calibrated && config.avoidance_enabled) {
      // The compensator output is already baseline-relative; shift it back
      // onto the measured baseline so extraction sees familiar units.
      std::vector<double> referenced(ns);
      for (size_t i = 0; i < ns; ++i)
        referenced[i] = log.baselines[i].mu_n + compensated[i];
      obstacles = extract_obstacles(referenced, poses, fits, log.baselines,
                                    circuits, config.gains.snr_threshold);
    }

    Vec3 p_des = config.desired_position(t);
    Vec3 feedforward =
        (config.desired_position(t + config.dt) - p_des) * (1.0 / config.dt);
    Vec3 v_des = feedforward + (p_des - p) * config.track_gain;
    Vec3 v_cmd = config.avoidance_enabled
                     ? avoidance_command(v_des, obstacles, p, config.gains)
                     : v_des;

    ScenarioFrame frame;
    frame.t = t;
    frame.desired = p_des;
    frame.actual = p;
    frame.v_cmd = v_cmd;
    frame.speed = norm(v_cmd);
    frame.n_obstacles = static_cast<int>(obstacles.size());
    for (const auto& obs : obstacles)
      frame.min_obstacle_distance =
          frame.min_obstacle_distance < 0.0
              ? obs.distance
              : std::min(frame.min_obstacle_distance, obs.distance);
    if (!active.empty()) {
      // Clearance may go negative on penetration (bounded below by the
      // intruder radius), so the no-intruder sentinel -1 stays unambiguous
      // at desk scale.
      double clear = std::numeric_limits<double>::infinity();
      for (const auto* ev : active)
        clear = std::min(clear, distance(p, ev->position) - ev->radius);
      frame.clearance = clear;
      log.min_clearance = std::min(log.min_clearance, frame.clearance);
      log.min_speed_during_intrusion =
          std::min(log.min_speed_during_intrusion, frame.speed);
    }
    log.frames.push_back(frame);

    p += v_cmd * config.dt;
    for (size_t i = 0; i < ns; ++i) drift[i] += rng.normal(0.0, drift_step_sigma);
  }
  return log;
}

}  // namespace gentact
