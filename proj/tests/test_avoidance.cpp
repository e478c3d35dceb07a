#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gentact/avoidance.hpp"
#include "gentact/kinematics.hpp"
#include "gentact/rng.hpp"

using namespace gentact;

namespace {

constexpr double kPi = 3.141592653589793;

Joint translation_joint(const Vec3& offset) {
  Joint j;
  j.type = JointType::Revolute;
  j.axis = {0, 0, 1};
  j.static_offset = Mat4::translation(offset);
  return j;
}

Electrode electrode_at(int id, const Vec3& center, const Vec3& normal) {
  Electrode e;
  e.id = id;
  e.center = center;
  e.normal = normal;
  e.radius = 0.0056;
  e.area = 1e-4;
  return e;
}

// Five sensors ringing the effector point, facing +-x, +-y, +z.
SkinUnit ring_skin() {
  SkinUnit skin;
  const Vec3 dirs[5] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
  for (int i = 0; i < 5; ++i) {
    SensorChannel ch;
    ch.electrode = electrode_at(i, dirs[i] * 0.01, dirs[i]);
    ch.coupling = CouplingParams{2.85e-13, 0.7};
    skin.sensors.push_back(ch);
  }
  return skin;
}

std::vector<PowerLawFit> truth_fits(const SkinUnit& skin) {
  std::vector<PowerLawFit> fits;
  for (size_t i = 0; i < skin.sensors.size(); ++i) {
    PowerLawFit f;
    f.sensor_id = skin.sensors[i].electrode.id;
    f.k = skin.sensors[i].coupling.k;
    f.w = skin.sensors[i].coupling.w;
    f.pearson_r = -1.0;
    f.n_samples = 100;
    fits.push_back(f);
  }
  return fits;
}

EnvironmentModel quiet_env() {
  EnvironmentModel env;
  env.c_env = 20e-12;
  env.noise_sigma = 3.0;
  env.drift_rate = 1e-15;
  return env;
}

}  // namespace

TEST_CASE("forward kinematics composes pure translations") {
  KinematicChain chain;
  chain.joints = {translation_joint({0.1, 0, 0}), translation_joint({0, 0.2, 0}),
                  translation_joint({0, 0, 0.3})};
  FkResult fk = forward_kinematics(chain, {0.0, 0.0, 0.0});
  Vec3 ee = fk.end_effector.translation_part();
  REQUIRE(ee.x == Catch::Approx(0.1));
  REQUIRE(ee.y == Catch::Approx(0.2));
  REQUIRE(ee.z == Catch::Approx(0.3));
  REQUIRE(fk.link_transforms.size() == 3);

  REQUIRE_THROWS_AS(forward_kinematics(chain, {0.0, 0.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(forward_kinematics(chain, {4.0, 0.0, 0.0}), JointLimitError);
  try {
    forward_kinematics(chain, {0.0, -4.0, 0.0});
    FAIL("expected JointLimitError");
  } catch (const JointLimitError& e) {
    REQUIRE(e.joint_index == 1);
  }
}

TEST_CASE("a quarter-turn revolute joint rotates downstream links") {
  KinematicChain chain;
  Joint base;  // revolute about z at the origin
  chain.joints = {base, translation_joint({0.1, 0, 0})};

  FkResult fk = forward_kinematics(chain, {kPi / 2.0, 0.0});
  Vec3 ee = fk.end_effector.translation_part();
  REQUIRE(ee.x == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(ee.y == Catch::Approx(0.1));
  REQUIRE(ee.z == Catch::Approx(0.0).margin(1e-12));

  Vec3 world = fk.end_effector.transform_point({0.05, 0.0, 0.02});
  REQUIRE(world.x == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(world.y == Catch::Approx(0.15));
  REQUIRE(world.z == Catch::Approx(0.02));
}

TEST_CASE("prismatic joints translate along their axis") {
  KinematicChain chain;
  Joint lift;
  lift.type = JointType::Prismatic;
  lift.axis = {0, 0, 2};  // non-unit axis still means its direction
  lift.lower = 0.0;
  lift.upper = 0.5;
  chain.joints = {lift};
  FkResult fk = forward_kinematics(chain, {0.25});
  REQUIRE(fk.end_effector.translation_part().z == Catch::Approx(0.25));
  REQUIRE_THROWS_AS(forward_kinematics(chain, {0.6}), JointLimitError);
}

TEST_CASE("sensor world poses round-trip through the link transform") {
  KinematicChain chain;
  Joint j0;
  j0.axis = {0, 0, 1};
  j0.static_offset = Mat4::translation({0.05, 0.0, 0.1});
  Joint j1;
  j1.axis = {0, 1, 0};
  j1.static_offset = Mat4::translation({0.2, 0.0, 0.0});
  Joint j2;
  j2.axis = {1, 0, 0};
  j2.static_offset = Mat4::translation({0.15, 0.05, 0.0});
  chain.joints = {j0, j1, j2};

  SkinUnit skin;
  SensorChannel a, b;
  a.electrode = electrode_at(0, {0.01, 0.02, 0.0}, {0, 0, 1});
  b.electrode = electrode_at(3, {-0.03, 0.0, 0.01}, {1, 0, 0});
  skin.sensors = {a, b};
  chain.link_skins = {{}, {}, {skin}};

  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> q = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                             rng.uniform(-1.0, 1.0)};
    FkResult fk = forward_kinematics(chain, q);
    REQUIRE(fk.sensor_poses.size() == 2);
    REQUIRE(fk.sensor_poses[0].electrode_id == 0);
    REQUIRE(fk.sensor_poses[1].electrode_id == 3);
    REQUIRE(fk.sensor_poses[1].link == 2);

    Mat4 link_from_world = fk.link_transforms[2].inverse_rigid();
    for (int s = 0; s < 2; ++s) {
      const Electrode& el = skin.sensors[s].electrode;
      Vec3 local = link_from_world.transform_point(fk.sensor_poses[s].center);
      REQUIRE(distance(local, el.center) < 1e-9);
      Vec3 local_n = link_from_world.transform_vector(fk.sensor_poses[s].normal);
      REQUIRE(distance(local_n, el.normal) < 1e-9);
    }
  }

  chain.link_skins = {{skin}};  // wrong arity: 1 entry for 3 links
  REQUIRE_THROWS_AS(forward_kinematics(chain, {0.0, 0.0, 0.0}),
                    std::invalid_argument);
}

namespace {

std::vector<SensorWorldPose> poses_for(const SkinUnit& skin) {
  std::vector<SensorWorldPose> poses;
  for (size_t i = 0; i < skin.sensors.size(); ++i) {
    SensorWorldPose p;
    p.sensor_index = static_cast<int>(i);
    p.electrode_id = skin.sensors[i].electrode.id;
    p.center = skin.sensors[i].electrode.center;
    p.normal = skin.sensors[i].electrode.normal;
    poses.push_back(p);
  }
  return poses;
}

}  // namespace

TEST_CASE("obstacle extraction inverts the coupling law along the normal") {
  SkinUnit skin;
  SensorChannel ch;
  ch.electrode = electrode_at(4, {0.3, 0.0, 0.2}, {0, 0, 1});
  ch.coupling = CouplingParams{2.85e-13, 0.7};
  skin.sensors = {ch};

  auto poses = poses_for(skin);
  auto fits = truth_fits(skin);
  std::vector<NoiseBaseline> baselines = {{500.0, 2.0, 2.0}};
  std::vector<CircuitParams> circuits = {skin.circuit(0)};
  double cpf = circuits[0].counts_per_farad();

  SECTION("baseline reading yields nothing") {
    REQUIRE(extract_obstacles(std::vector<double>{500.0}, poses, fits, baselines,
                              circuits)
                .empty());
  }

  SECTION("a clear reading maps to the exact distance") {
    double c_signal = 2.85e-13 / std::pow(0.05, 0.7);
    std::vector<double> counts = {500.0 + c_signal * cpf};
    auto obstacles = extract_obstacles(counts, poses, fits, baselines, circuits);
    REQUIRE(obstacles.size() == 1);
    REQUIRE(obstacles[0].sensor_id == 4);
    REQUIRE(obstacles[0].distance == Catch::Approx(0.05).margin(1e-9));
    REQUIRE(obstacles[0].world_point.x == Catch::Approx(0.3));
    REQUIRE(obstacles[0].world_point.y == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(obstacles[0].world_point.z == Catch::Approx(0.25));
    REQUIRE(obstacles[0].confidence == Catch::Approx(c_signal * cpf / 2.0));
    REQUIRE(obstacles[0].confidence >= 3.5);
  }

  SECTION("sub-threshold and below-baseline readings yield nothing") {
    REQUIRE(extract_obstacles(std::vector<double>{500.0 + 3.4999 * 2.0}, poses,
                              fits, baselines, circuits)
                .empty());
    REQUIRE(extract_obstacles(std::vector<double>{500.0 - 20.0}, poses, fits,
                              baselines, circuits)
                .empty());
  }

  SECTION("argument validation") {
    REQUIRE_THROWS_AS(extract_obstacles(std::vector<double>{1.0, 2.0}, poses,
                                        fits, baselines, circuits),
                      std::invalid_argument);
    std::vector<NoiseBaseline> flat = {{500.0, 0.0, 2.0}};
    REQUIRE_THROWS_AS(extract_obstacles(std::vector<double>{600.0}, poses, fits,
                                        flat, circuits),
                      DegenerateBaselineError);
  }
}

TEST_CASE("frame-based extraction sees every sensor near the object") {
  SkinUnit skin = ring_skin();
  auto poses = poses_for(skin);
  auto fits = truth_fits(skin);
  std::vector<NoiseBaseline> baselines(5, NoiseBaseline{200.0, 2.0, 2.0});
  std::vector<CircuitParams> circuits;
  for (size_t i = 0; i < 5; ++i) circuits.push_back(skin.circuit(i));

  // Object 4 cm above the ring: every sensor is within detection range.
  Vec3 object{0.0, 0.0, 0.04};
  CapacitanceFrame frame;
  frame.t = 0.0;
  for (size_t i = 0; i < 5; ++i) {
    double c = coupling_capacitance(skin.sensors[i].electrode, object, 0.0,
                                    skin.sensors[i].coupling);
    frame.counts.push_back(200 +
                           static_cast<std::int64_t>(std::llround(
                               c * circuits[i].counts_per_farad())));
  }
  auto obstacles = extract_obstacles(frame, poses, fits, baselines, circuits);
  REQUIRE(obstacles.size() == 5);
  for (const auto& obs : obstacles) REQUIRE(obs.confidence >= 3.5);
  // The top-facing sensor is nearest and its normal points at the object.
  REQUIRE(obstacles[4].distance < obstacles[0].distance);
  REQUIRE(obstacles[4].world_point.z ==
          Catch::Approx(0.01 + obstacles[4].distance));
}

TEST_CASE("avoidance command scales speed and pushes away") {
  AvoidanceGains gains;
  gains.k_rep = 0.05;
  gains.d_safe = 0.10;
  gains.s_min = 0.0;
  Vec3 ee{0, 0, 0};
  Vec3 v_des{0.1, 0.0, 0.0};

  SECTION("no obstacles: identity passthrough") {
    Vec3 v = avoidance_command(v_des, {}, ee, gains);
    REQUIRE(v.x == 0.1);
    REQUIRE(v.y == 0.0);
    REQUIRE(v.z == 0.0);
  }

  SECTION("obstacle exactly at d_safe has no influence") {
    ObstacleEstimate obs{0, 0.10, {0.10, 0.0, 0.0}, 5.0};
    Vec3 v = avoidance_command(v_des, {obs}, ee, gains);
    REQUIRE(v.x == Catch::Approx(0.1));
    REQUIRE(v.y == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("half-distance obstacle ahead slows and repels") {
    ObstacleEstimate obs{0, 0.05, {0.05, 0.0, 0.0}, 8.0};
    Vec3 v = avoidance_command(v_des, {obs}, ee, gains);
    // s = 0.5, repulsion = 0.05 * 0.5 toward -x.
    REQUIRE(v.x == Catch::Approx(0.5 * 0.1 - 0.025));
    REQUIRE(norm(v) < norm(v_des));
  }

  SECTION("command is continuous across the influence boundary") {
    ObstacleEstimate just_in{0, 0.10 - 1e-9, {0.10, 0.0, 0.0}, 5.0};
    ObstacleEstimate just_out{0, 0.10 + 1e-9, {0.10, 0.0, 0.0}, 5.0};
    Vec3 a = avoidance_command(v_des, {just_in}, ee, gains);
    Vec3 b = avoidance_command(v_des, {just_out}, ee, gains);
    REQUIRE(norm(a - b) < 1e-7);
  }

  SECTION("symmetric obstacles cancel laterally but still slow") {
    ObstacleEstimate up{0, 0.05, {0.0, 0.05, 0.0}, 5.0};
    ObstacleEstimate down{1, 0.05, {0.0, -0.05, 0.0}, 5.0};
    Vec3 v = avoidance_command(v_des, {up, down}, ee, gains);
    REQUIRE(v.x == Catch::Approx(0.05));
    REQUIRE(v.y == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("speed scale clamps at its floor") {
    gains.s_min = 0.2;
    ObstacleEstimate close{0, 0.001, {-0.001, 0.0, 0.0}, 50.0};
    Vec3 v = avoidance_command({0.0, 0.1, 0.0}, {close}, ee, gains);
    REQUIRE(v.y == Catch::Approx(0.2 * 0.1));
    REQUIRE(v.x == Catch::Approx(gains.k_rep * (1.0 - 0.001 / 0.10)));
  }

  SECTION("coincident estimate point stays finite") {
    ObstacleEstimate on_top{0, 0.0, {0.0, 0.0, 0.0}, 50.0};
    Vec3 v = avoidance_command(v_des, {on_top}, ee, gains);
    REQUIRE(std::isfinite(v.x));
    REQUIRE(v.x == Catch::Approx(0.0).margin(1e-15));  // s = s_min = 0
  }

  SECTION("gain validation") {
    AvoidanceGains bad = gains;
    bad.d_safe = 0.0;
    REQUIRE_THROWS_AS(avoidance_command(v_des, {}, ee, bad), std::invalid_argument);
    bad = gains;
    bad.s_min = 1.5;
    REQUIRE_THROWS_AS(avoidance_command(v_des, {}, ee, bad), std::invalid_argument);
    bad = gains;
    bad.k_rep = -0.1;
    REQUIRE_THROWS_AS(avoidance_command(v_des, {}, ee, bad), std::invalid_argument);
  }
}

namespace {

CircleScenarioConfig base_scenario() {
  CircleScenarioConfig cfg;
  cfg.center = {0.0, 0.0, 0.2};
  cfg.radius = 0.10;
  cfg.period_s = 8.0;
  cfg.duration_s = 10.0;
  cfg.dt = 0.05;
  cfg.track_gain = 2.0;
  cfg.calibration_s = 2.0;
  cfg.gains.k_rep = 0.08;
  cfg.gains.d_safe = 0.08;
  cfg.gains.s_min = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("unobstructed circle tracking stays on the path") {
  SkinUnit skin = ring_skin();
  CircleScenarioConfig cfg = base_scenario();
  ScenarioLog log = run_circle_scenario(skin, quiet_env(), truth_fits(skin), cfg, 42);

  REQUIRE(log.frames.size() == 201);
  REQUIRE(log.baselines.size() == 5);
  double max_dev = 0.0;
  for (const auto& f : log.frames)
    max_dev = std::max(max_dev, distance(f.actual, f.desired));
  REQUIRE(max_dev < 1e-3);
  REQUIRE(log.cruise_speed == Catch::Approx(2.0 * kPi * 0.1 / 8.0));
  // No intruder: the intrusion statistics stay at their idle values.
  REQUIRE(std::isinf(log.min_clearance));
}

TEST_CASE("scenario runs are deterministic in the seed") {
  SkinUnit skin = ring_skin();
  CircleScenarioConfig cfg = base_scenario();
  cfg.duration_s = 6.0;
  IntruderEvent ev;
  ev.t_start = 3.0;
  ev.t_end = 5.0;
  ev.position = {0.0, 0.1, 0.2};
  ev.radius = 0.02;
  cfg.intruders = {ev};

  ScenarioLog a = run_circle_scenario(skin, quiet_env(), truth_fits(skin), cfg, 7);
  ScenarioLog b = run_circle_scenario(skin, quiet_env(), truth_fits(skin), cfg, 7);
  REQUIRE(a.frames.size() == b.frames.size());
  bool identical = true;
  for (size_t i = 0; i < a.frames.size(); ++i) {
    if (a.frames[i].actual.x != b.frames[i].actual.x ||
        a.frames[i].actual.y != b.frames[i].actual.y ||
        a.frames[i].v_cmd.x != b.frames[i].v_cmd.x ||
        a.frames[i].n_obstacles != b.frames[i].n_obstacles)
      identical = false;
  }
  REQUIRE(identical);
  REQUIRE(a.min_clearance == b.min_clearance);

  ScenarioLog c = run_circle_scenario(skin, quiet_env(), truth_fits(skin), cfg, 8);
  bool differs = false;
  for (size_t i = 0; i < a.frames.size() && !differs; ++i)
    differs = a.frames[i].actual.x != c.frames[i].actual.x;
  REQUIRE(differs);
}

TEST_CASE("static intruder: avoidance beats the ablation and then recovers") {
  SkinUnit skin = ring_skin();
  CircleScenarioConfig cfg = base_scenario();
  cfg.duration_s = 24.0;
  IntruderEvent ev;
  ev.t_start = 4.0;
  ev.t_end = 12.0;
  ev.position = {0.0, 0.1, 0.2};  // on the circle, reached at t = 10 s
  ev.radius = 0.02;
  cfg.intruders = {ev};

  ScenarioLog avoid = run_circle_scenario(skin, quiet_env(), truth_fits(skin), cfg, 31);
  CircleScenarioConfig no_avoid = cfg;
  no_avoid.avoidance_enabled = false;
  ScenarioLog ablation =
      run_circle_scenario(skin, quiet_env(), truth_fits(skin), no_avoid, 31);

  // The unprotected run drives straight through the intruder's position.
  REQUIRE(ablation.min_clearance < 0.0);
  REQUIRE(avoid.min_clearance > ablation.min_clearance);
  REQUIRE(avoid.min_clearance > 0.0);

  // Speed drops well below cruise while the intruder is in range.
  REQUIRE(avoid.min_speed_during_intrusion < 0.8 * avoid.cruise_speed);

  // After removal the robot settles back onto the circle within one period.
  for (const auto& f : avoid.frames) {
    if (f.t >= ev.t_end + cfg.period_s)
      REQUIRE(distance(f.actual, f.desired) < 0.005);
  }
}

TEST_CASE("minimum clearance grows with the repulsion gain") {
  SkinUnit skin = ring_skin();
  CircleScenarioConfig cfg = base_scenario();
  cfg.duration_s = 14.0;
  IntruderEvent ev;
  ev.t_start = 4.0;
  ev.t_end = 14.0;
  ev.position = {0.0, 0.1, 0.2};
  ev.radius = 0.02;
  cfg.intruders = {ev};

  std::vector<double> clearances;
  for (double k_rep : {0.02, 0.04, 0.08, 0.16, 0.32}) {
    cfg.gains.k_rep = k_rep;
    ScenarioLog log = run_circle_scenario(skin, quiet_env(), truth_fits(skin), cfg, 55);
    clearances.push_back(log.min_clearance);
  }
  for (size_t i = 1; i < clearances.size(); ++i)
    REQUIRE(clearances[i] >= clearances[i - 1] - 1e-3);
  REQUIRE(clearances.back() > clearances.front());
}

TEST_CASE("scenario argument validation") {
  SkinUnit skin = ring_skin();
  CircleScenarioConfig cfg = base_scenario();
  auto fits = truth_fits(skin);

  CircleScenarioConfig bad = cfg;
  bad.dt = 0.0;
  REQUIRE_THROWS_AS(run_circle_scenario(skin, quiet_env(), fits, bad, 1),
                    std::invalid_argument);
  bad = cfg;
  bad.duration_s = 1.0;  // shorter than the calibration window
  REQUIRE_THROWS_AS(run_circle_scenario(skin, quiet_env(), fits, bad, 1),
                    std::invalid_argument);
  bad = cfg;
  IntruderEvent early;
  early.t_start = 0.5;
  early.t_end = 3.0;
  early.position = {0.0, 0.1, 0.2};
  bad.intruders = {early};
  REQUIRE_THROWS_AS(run_circle_scenario(skin, quiet_env(), fits, bad, 1),
                    std::invalid_argument);

  std::vector<PowerLawFit> short_fits(fits.begin(), fits.end() - 1);
  REQUIRE_THROWS_AS(run_circle_scenario(skin, quiet_env(), short_fits, cfg, 1),
                    std::invalid_argument);
  SkinUnit empty;
  REQUIRE_THROWS_AS(run_circle_scenario(empty, quiet_env(), {}, cfg, 1),
                    std::invalid_argument);
}
