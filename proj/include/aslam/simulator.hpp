#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "aslam/model.hpp"
#include "aslam/observation.hpp"

namespace aslam {

struct TruthSample {
  double t = 0.0;
  Quaternion q;
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();           ///< body rate, rad/s
  Vec3 accel_inertial = Vec3::Zero();  ///< second derivative of r, m/s^2
};

enum class TrajectoryKind { kSpline, kHover, kCircle };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kSpline;
  /// Spline mode: via points, starting where the vehicle starts, and the travel time of
  /// each leg (durations.size() == via_points.size() - 1).
  std::vector<Vec3> via_points;
  std::vector<double> durations;
  double bank_gain = 0.5;  ///< roll per radian of heading change at a via point
  /// Hover mode: fixed position. Circle mode: start point of the circle.
  Vec3 origin = Vec3::Zero();
  double radius = 5.0;      ///< circle, m
  double angular_rate = 0.2;  ///< circle, rad/s

  void validate() const;
};

/// Analytic trajectory: position, velocity and acceleration come from the curve itself,
/// and the body rate from the attitude parameterization.
class Trajectory {
 public:
  explicit Trajectory(TrajectorySpec spec);

  TruthSample at(double t) const;
  /// Spline mode: sum of leg durations; otherwise unbounded.
  double duration() const { return duration_; }
  const TrajectorySpec& spec() const { return spec_; }

 private:
  struct Spline1D {
    std::vector<double> knots;
    std::vector<double> values;
    std::vector<double> second;  // second derivatives at the knots
    void fit(const std::vector<double>& t, const std::vector<double>& y);
    /// value, first and second derivative
    std::array<double, 3> eval(double t) const;
  };

  TrajectorySpec spec_;
  double duration_;
  std::array<Spline1D, 3> pos_;
  std::array<Spline1D, 3> euler_;  // yaw, pitch, roll (Z-Y-X)
};

/// Samples the trajectory at t = k / rate_hz for k = 0 .. floor(duration * rate_hz).
std::vector<TruthSample> generate_trajectory(const Trajectory& trajectory, double rate_hz, double duration);

struct LandmarkSpec {
  LandmarkId id = 0;
  Vec3 position = Vec3::Zero();
  bool anchor = false;
};

struct ScenarioConfig {
  TrajectorySpec trajectory;
  std::vector<LandmarkSpec> landmarks;
  double imu_rate = 20.0;  ///< Hz
  double obs_rate = 20.0;  ///< Hz; must divide imu_rate
  NoiseSpec noise;
  Vec3 bias_g = Vec3::Zero();  ///< initial true gyro bias, rad/s
  Vec3 bias_a = Vec3::Zero();  ///< initial true accelerometer bias, m/s^2
  std::array<double, 2> sigma_p_range{0.1, 0.25};  ///< m
  Vec3 gravity{0.0, 0.0, -9.81};
  std::uint64_t seed = 1;
  double duration = 120.0;  ///< s
  /// Optional visibility mask; the default sees every landmark at every epoch.
  std::function<bool(double t, LandmarkId id)> visible;

  void validate() const;
  int imu_per_obs() const;
  std::vector<LandmarkId> anchor_ids() const;
};

struct SensorStreams {
  std::vector<TruthSample> truth;  ///< at every IMU sample time
  std::vector<ImuSample> imu;
  std::vector<Vec3> true_bias_g;   ///< per IMU sample
  std::vector<Vec3> true_bias_a;
  std::vector<LandmarkObservation> observations;
  std::vector<std::size_t> obs_imu_index;  ///< IMU index matching each observation time
  std::vector<double> sigma_p;  ///< per landmark, catalog order
};

/// Per-landmark noise standard deviations drawn uniformly from the configured range.
std::vector<double> draw_landmark_sigmas(const ScenarioConfig& config);

std::vector<ImuSample> synthesize_imu(const std::vector<TruthSample>& truth, const ScenarioConfig& config,
                                      std::vector<Vec3>* bias_g = nullptr, std::vector<Vec3>* bias_a = nullptr);

std::vector<LandmarkObservation> synthesize_observations(const std::vector<TruthSample>& truth,
                                                         const ScenarioConfig& config,
                                                         const std::vector<double>& sigma_p,
                                                         std::vector<std::size_t>* imu_index = nullptr);

/// Truth, IMU and landmark streams for a scenario; a deterministic function of the config.
SensorStreams simulate(const ScenarioConfig& config);

}  // namespace aslam
