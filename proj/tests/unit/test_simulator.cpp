#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "aslam/error.hpp"
#include "aslam/scenario_config.hpp"
#include "aslam/simulator.hpp"

namespace aslam {
namespace {

TrajectorySpec default_path() {
  TrajectorySpec t;
  t.via_points = {Vec3(0, 0, 0), Vec3(12, 4, 0.5), Vec3(22, 14, 1.0), Vec3(18, 26, 1.5)};
  t.durations = {20.0, 20.0, 20.0};
  t.bank_gain = 0.3;
  return t;
}

ScenarioConfig quiet_scenario() {
  ScenarioConfig c;
  c.trajectory = default_path();
  c.landmarks = {{1, Vec3(-8, -6, 0.5), true}, {2, Vec3(22, -2, 2.5), true}, {3, Vec3(4, 28, 1.5), false}};
  c.duration = 10.0;
  c.sigma_p_range = {0.0, 0.0};
  c.bias_g = Vec3(0.01, -0.01, 0.005);
  c.bias_a = Vec3(0.05, 0.0, -0.05);
  return c;
}

TEST(Trajectory, HoverIsStill) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::kHover;
  spec.origin = Vec3(1, 2, 3);
  for (const TruthSample& s : generate_trajectory(Trajectory(spec), 20.0, 5.0)) {
    EXPECT_EQ(s.r, Vec3(1, 2, 3));
    EXPECT_EQ(s.q.coeffs(), Quaternion::identity().coeffs());
    EXPECT_EQ(s.omega, Vec3::Zero());
    EXPECT_EQ(s.accel_inertial, Vec3::Zero());
  }
}

TEST(Trajectory, CircleCentripetalAcceleration) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::kCircle;
  spec.radius = 7.0;
  spec.angular_rate = 0.3;
  for (const TruthSample& s : generate_trajectory(Trajectory(spec), 20.0, 30.0)) {
    EXPECT_NEAR(s.accel_inertial.norm(), 7.0 * 0.09, 1e-9);
  }
}

TEST(Trajectory, SampleTimesAndCount) {
  const auto truth = generate_trajectory(Trajectory(default_path()), 20.0, 10.0);
  ASSERT_EQ(truth.size(), 201u);
  EXPECT_DOUBLE_EQ(truth.back().t, 10.0);
}

TEST(Trajectory, VelocityMatchesCentralDifference) {
  const Trajectory traj(default_path());
  const double h = 1.0 / 200.0;
  double worst = 0.0;
  for (double t = h; t < traj.duration() - h; t += h) {
    const Vec3 fd = (traj.at(t + h).r - traj.at(t - h).r) / (2.0 * h);
    worst = std::max(worst, (fd - traj.at(t).v).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Trajectory, AccelerationMatchesCentralDifference) {
  const Trajectory traj(default_path());
  const double h = 1.0 / 200.0;
  double worst = 0.0;
  for (double t = h; t < traj.duration() - h; t += h) {
    // The jerk jumps at the knots, so the stencil must not straddle one.
    if (std::abs(std::remainder(t, 20.0)) < 1.5 * h) continue;
    const Vec3 fd = (traj.at(t + h).v - traj.at(t - h).v) / (2.0 * h);
    worst = std::max(worst, (fd - traj.at(t).accel_inertial).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Trajectory, BodyRateMatchesAttitudeKinematics) {
  const Trajectory traj(default_path());
  const double h = 1.0 / 200.0;
  double worst = 0.0;
  for (double t = h; t < traj.duration() - h; t += h) {
    const Quaternion predicted = quat_propagate(traj.at(t - h).q, traj.at(t).omega, 2.0 * h);
    worst = std::max(worst, orientation_error(predicted, traj.at(t + h).q));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Trajectory, InvalidSpecs) {
  TrajectorySpec one;
  one.via_points = {Vec3::Zero()};
  EXPECT_THROW(Trajectory{one}, Error);
  TrajectorySpec legs = default_path();
  legs.durations.pop_back();
  EXPECT_THROW(Trajectory{legs}, Error);
}

TEST(Imu, StaticIdentityMeasuresGravityReaction) {
  ScenarioConfig c = quiet_scenario();
  c.trajectory.kind = TrajectoryKind::kHover;
  c.bias_g.setZero();
  c.bias_a.setZero();
  const auto truth = generate_trajectory(Trajectory(c.trajectory), c.imu_rate, 1.0);
  for (const ImuSample& s : synthesize_imu(truth, c)) {
    EXPECT_LE((s.accel - Vec3(0, 0, -9.81)).norm(), 1e-15);
    EXPECT_EQ(s.gyro, Vec3::Zero());
  }
}

TEST(Imu, NoiseFreeRoundTripThroughPropagation) {
  const ScenarioConfig c = quiet_scenario();
  const SensorStreams st = simulate(c);
  const TruthSample& t0 = st.truth.front();
  FilterState s;
  s.q = t0.q;
  s.r = t0.r;
  s.v = t0.v;
  s.bg = c.bias_g;
  s.ba = c.bias_a;
  ModelConstants k;
  k.gravity = c.gravity;
  const std::span<const ImuSample> imu(st.imu);
  double worst_r = 0.0;
  double worst_q = 0.0;
  for (std::size_t i = 0; i + 1 < imu.size(); ++i) {
    propagate_nonlinear_in_place(s, imu.subspan(i, 2), k, imu[i + 1].t - imu[i].t);
    worst_r = std::max(worst_r, (s.r - st.truth[i + 1].r).norm());
    worst_q = std::max(worst_q, orientation_error(s.q, st.truth[i + 1].q));
  }
  EXPECT_NEAR(st.truth.back().t, 10.0, 1e-12);
  EXPECT_LE(worst_r, 1e-3);
  EXPECT_LE(worst_q, 1e-4);
}

TEST(Imu, BiasWalkIncrementsMatchIntensity) {
  ScenarioConfig c = quiet_scenario();
  c.trajectory.kind = TrajectoryKind::kHover;
  c.duration = 2000.0;
  c.noise.sigma_bg = 0.01;
  std::vector<Vec3> bg;
  const auto truth = generate_trajectory(Trajectory(c.trajectory), c.imu_rate, c.duration);
  synthesize_imu(truth, c, &bg);
  double sum_sq = 0.0;
  for (std::size_t i = 1; i < bg.size(); ++i) sum_sq += (bg[i] - bg[i - 1]).squaredNorm();
  const double dt = 1.0 / c.imu_rate;
  const double var = sum_sq / (3.0 * static_cast<double>(bg.size() - 1));
  EXPECT_NEAR(var / (c.noise.sigma_bg * c.noise.sigma_bg * dt), 1.0, 0.03);
}

TEST(Imu, WhiteNoiseScalesWithRate) {
  ScenarioConfig c = quiet_scenario();
  c.trajectory.kind = TrajectoryKind::kHover;
  c.duration = 2000.0;
  c.bias_g.setZero();
  c.noise.sigma_g = 0.003;
  const auto truth = generate_trajectory(Trajectory(c.trajectory), c.imu_rate, c.duration);
  const auto imu = synthesize_imu(truth, c);
  double sum_sq = 0.0;
  for (const ImuSample& s : imu) sum_sq += s.gyro.squaredNorm();
  const double var = sum_sq / (3.0 * static_cast<double>(imu.size()));
  EXPECT_NEAR(var / (c.noise.sigma_g * c.noise.sigma_g * c.imu_rate), 1.0, 0.03);
}

TEST(Observations, NoiseFreeIdentityPoseSeesCatalog) {
  ScenarioConfig c = quiet_scenario();
  c.trajectory.kind = TrajectoryKind::kHover;
  const auto truth = generate_trajectory(Trajectory(c.trajectory), c.imu_rate, 1.0);
  const auto obs = synthesize_observations(truth, c, {0.0, 0.0, 0.0});
  ASSERT_EQ(obs.size(), truth.size());
  for (const LandmarkObservation& o : obs) {
    ASSERT_EQ(o.entries.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(o.entries[i].z, c.landmarks[i].position);
  }
}

TEST(Observations, SampleCovarianceMatchesSigma) {
  ScenarioConfig c = quiet_scenario();
  c.trajectory.kind = TrajectoryKind::kHover;
  c.duration = 5000.0;
  const double sigma = 0.17;
  const auto truth = generate_trajectory(Trajectory(c.trajectory), c.imu_rate, c.duration);
  const auto obs = synthesize_observations(truth, c, {sigma, 0.0, 0.0});
  ASSERT_GE(obs.size(), 100000u);
  Mat3 S = Mat3::Zero();
  for (const LandmarkObservation& o : obs) {
    const Vec3 e = o.entries[0].z - c.landmarks[0].position;
    S += e * e.transpose();
  }
  S /= static_cast<double>(obs.size());
  const Mat3 expected = sigma * sigma * Mat3::Identity();
  EXPECT_LE((S - expected).norm() / expected.norm(), 0.02);
}

TEST(Observations, VisibilityMaskDropsEntries) {
  ScenarioConfig c = quiet_scenario();
  c.visible = [](double t, LandmarkId id) { return id != 3 || t < 0.5; };
  const SensorStreams st = simulate(c);
  for (const LandmarkObservation& o : st.observations) {
    EXPECT_EQ(o.entries.size(), o.t < 0.5 ? 3u : 2u);
  }
}

TEST(Simulate, DeterministicForSeed) {
  ScenarioConfig c = quiet_scenario();
  c.noise = NoiseSpec{0.003, 1e-5, 0.02, 1e-4};
  c.sigma_p_range = {0.1, 0.25};
  c.seed = 42;
  const SensorStreams a = simulate(c);
  const SensorStreams b = simulate(c);
  ASSERT_EQ(a.imu.size(), b.imu.size());
  for (std::size_t i = 0; i < a.imu.size(); ++i) {
    EXPECT_EQ(a.imu[i].gyro, b.imu[i].gyro);
    EXPECT_EQ(a.imu[i].accel, b.imu[i].accel);
  }
  ASSERT_EQ(a.observations.size(), b.observations.size());
  for (std::size_t i = 0; i < a.observations.size(); ++i) {
    for (std::size_t k = 0; k < a.observations[i].entries.size(); ++k) {
      EXPECT_EQ(a.observations[i].entries[k].z, b.observations[i].entries[k].z);
    }
  }
  EXPECT_EQ(a.sigma_p, b.sigma_p);
  c.seed = 43;
  EXPECT_NE(simulate(c).imu[5].gyro, a.imu[5].gyro);
}

TEST(Simulate, SigmasDrawnInsideRange) {
  ScenarioConfig c = quiet_scenario();
  c.sigma_p_range = {0.1, 0.25};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    c.seed = seed;
    for (double s : draw_landmark_sigmas(c)) {
      EXPECT_GE(s, 0.1);
      EXPECT_LE(s, 0.25);
    }
  }
}

TEST(Simulate, ObservationIndexMatchesTime) {
  ScenarioConfig c = quiet_scenario();
  c.imu_rate = 100.0;
  c.obs_rate = 20.0;
  const SensorStreams st = simulate(c);
  ASSERT_EQ(st.observations.size(), st.obs_imu_index.size());
  for (std::size_t j = 0; j < st.observations.size(); ++j) {
    EXPECT_NEAR(st.imu[st.obs_imu_index[j]].t, st.observations[j].t, 1e-12);
  }
  EXPECT_EQ(st.obs_imu_index[1] - st.obs_imu_index[0], 5u);
}

TEST(Simulate, InvalidScenarios) {
  ScenarioConfig no_anchor = quiet_scenario();
  for (auto& l : no_anchor.landmarks) l.anchor = false;
  EXPECT_THROW(no_anchor.validate(), Error);
  ScenarioConfig rates = quiet_scenario();
  rates.obs_rate = 30.0;
  EXPECT_THROW(rates.validate(), Error);
  ScenarioConfig dup = quiet_scenario();
  dup.landmarks[2].id = 1;
  EXPECT_THROW(dup.validate(), Error);
}

}  // namespace
}  // namespace aslam
