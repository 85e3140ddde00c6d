#include "aslam/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "aslam/error.hpp"

namespace aslam {

namespace {

enum Stream : std::uint64_t { kSigmaStream = 1, kImuNoise = 2, kBiasWalk = 3, kObsNoise = 4 };

std::mt19937_64 make_engine(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return sigma * Vec3(x, y, z);
}

double wrap_pi(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

// Body rate for A = Rz(yaw) Ry(pitch) Rx(roll) from the Euler angle rates.
Vec3 body_rate(double pitch, double roll, double dyaw, double dpitch, double droll) {
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  const double sr = std::sin(roll), cr = std::cos(roll);
  return {droll - dyaw * sp, dpitch * cr + dyaw * sr * cp, -dpitch * sr + dyaw * cr * cp};
}

}  // namespace

void TrajectorySpec::validate() const {
  if (kind == TrajectoryKind::kSpline) {
    if (via_points.size() < 2) throw Error(ErrorCode::kInvalidInput, "spline trajectory needs at least 2 via points");
    if (durations.size() + 1 != via_points.size()) {
      throw Error(ErrorCode::kInvalidInput, "spline trajectory needs one duration per leg");
    }
    for (double d : durations) {
      if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorCode::kInvalidInput, "leg durations must be > 0");
    }
    for (const Vec3& p : via_points) {
      if (!p.allFinite()) throw Error(ErrorCode::kInvalidInput, "via points must be finite");
    }
  }
  if (kind == TrajectoryKind::kCircle && (!(radius > 0.0) || !std::isfinite(angular_rate))) {
    throw Error(ErrorCode::kInvalidInput, "circle needs radius > 0 and a finite rate");
  }
  if (!origin.allFinite()) throw Error(ErrorCode::kInvalidInput, "origin must be finite");
}

void Trajectory::Spline1D::fit(const std::vector<double>& t, const std::vector<double>& y) {
  knots = t;
  values = y;
  const std::size_t n = t.size();
  second.assign(n, 0.0);
  std::vector<double> u(n, 0.0);
  // Clamped ends with zero slope.
  {
    const double h = t[1] - t[0];
    second[0] = -0.5;
    u[0] = (3.0 / h) * ((y[1] - y[0]) / h);
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double sig = (t[i] - t[i - 1]) / (t[i + 1] - t[i - 1]);
    const double p = sig * second[i - 1] + 2.0;
    second[i] = (sig - 1.0) / p;
    const double d = (y[i + 1] - y[i]) / (t[i + 1] - t[i]) - (y[i] - y[i - 1]) / (t[i] - t[i - 1]);
    u[i] = (6.0 * d / (t[i + 1] - t[i - 1]) - sig * u[i - 1]) / p;
  }
  {
    const double h = t[n - 1] - t[n - 2];
    const double qn = 0.5;
    const double un = (3.0 / h) * (0.0 - (y[n - 1] - y[n - 2]) / h);
    second[n - 1] = (un - qn * u[n - 2]) / (qn * second[n - 2] + 1.0);
  }
  for (std::size_t k = n - 1; k-- > 0;) second[k] = second[k] * second[k + 1] + u[k];
}

std::array<double, 3> Trajectory::Spline1D::eval(double t) const {
  if (t < knots.front()) return {values.front(), 0.0, 0.0};
  if (t > knots.back()) return {values.back(), 0.0, 0.0};
  const auto it = std::upper_bound(knots.begin(), knots.end(), t);
  const std::size_t hi = std::min(static_cast<std::size_t>(it - knots.begin()), knots.size() - 1);
  const std::size_t lo = hi - 1;
  const double h = knots[hi] - knots[lo];
  const double a = (knots[hi] - t) / h;
  const double b = 1.0 - a;
  const double ml = second[lo], mh = second[hi];
  const double y = a * values[lo] + b * values[hi] + ((a * a * a - a) * ml + (b * b * b - b) * mh) * h * h / 6.0;
  const double dy = (values[hi] - values[lo]) / h - (3.0 * a * a - 1.0) / 6.0 * h * ml + (3.0 * b * b - 1.0) / 6.0 * h * mh;
  const double ddy = a * ml + b * mh;
  return {y, dy, ddy};
}

Trajectory::Trajectory(TrajectorySpec spec) : spec_(std::move(spec)), duration_(0.0) {
  spec_.validate();
  if (spec_.kind != TrajectoryKind::kSpline) {
    duration_ = std::numeric_limits<double>::infinity();
    return;
  }
  const auto& pts = spec_.via_points;
  const std::size_t n = pts.size();
  std::vector<double> knots(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) knots[i] = knots[i - 1] + spec_.durations[i - 1];
  duration_ = knots.back();

  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = pts[i](axis);
    pos_[static_cast<std::size_t>(axis)].fit(knots, y);
  }

  // Via attitudes: heading and pitch from the local chord, roll from the heading change.
  std::vector<double> yaw(n, 0.0), pitch(n, 0.0), roll(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const Vec3 chord = (i + 1 < n) ? Vec3(pts[i + 1] - pts[i - 1]) : Vec3(pts[i] - pts[i - 1]);
    const double horiz = chord.head<2>().norm();
    const double heading = horiz > 1e-9 ? std::atan2(chord.y(), chord.x()) : yaw[i - 1];
    yaw[i] = yaw[i - 1] + wrap_pi(heading - yaw[i - 1]);
    pitch[i] = -std::atan2(chord.z(), std::max(horiz, 1e-9));
    if (i + 1 < n) roll[i] = spec_.bank_gain * (yaw[i] - yaw[i - 1]);
  }
  euler_[0].fit(knots, yaw);
  euler_[1].fit(knots, pitch);
  euler_[2].fit(knots, roll);
}

TruthSample Trajectory::at(double t) const {
  TruthSample s;
  s.t = t;
  switch (spec_.kind) {
    case TrajectoryKind::kHover:
      s.r = spec_.origin;
      return s;
    case TrajectoryKind::kCircle: {
      const double R = spec_.radius, w = spec_.angular_rate;
      const double c = std::cos(w * t), sn = std::sin(w * t);
      s.r = spec_.origin + R * Vec3(sn, 1.0 - c, 0.0);
      s.v = R * w * Vec3(c, sn, 0.0);
      s.accel_inertial = R * w * w * Vec3(-sn, c, 0.0);
      s.q = Quaternion::from_axis_angle(Vec3::UnitZ(), w * t);
      s.omega = Vec3(0.0, 0.0, w);
      return s;
    }
    case TrajectoryKind::kSpline:
      break;
  }
  for (int axis = 0; axis < 3; ++axis) {
    const auto e = pos_[static_cast<std::size_t>(axis)].eval(t);
    s.r(axis) = e[0];
    s.v(axis) = e[1];
    s.accel_inertial(axis) = e[2];
  }
  const auto yaw = euler_[0].eval(t);
  const auto pitch = euler_[1].eval(t);
  const auto roll = euler_[2].eval(t);
  s.q = quat_from_matrix(rot_z(yaw[0]) * rot_y(pitch[0]) * rot_x(roll[0]));
  s.omega = body_rate(pitch[0], roll[0], yaw[1], pitch[1], roll[1]);
  return s;
}

std::vector<TruthSample> generate_trajectory(const Trajectory& trajectory, double rate_hz, double duration) {
  if (!(rate_hz > 0.0) || !(duration > 0.0)) throw Error(ErrorCode::kInvalidInput, "rate and duration must be > 0");
  const auto count = static_cast<std::size_t>(std::floor(duration * rate_hz + 1e-9)) + 1;
  std::vector<TruthSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    TruthSample s = trajectory.at(static_cast<double>(k) / rate_hz);
    // Keep the quaternion sign continuous along the stream.
    if (!out.empty() && s.q.coeffs().dot(out.back().q.coeffs()) < 0.0) s.q = -s.q;
    out.push_back(s);
  }
  return out;
}

void ScenarioConfig::validate() const {
  trajectory.validate();
  noise.validate();
  if (!(imu_rate > 0.0) || !(obs_rate > 0.0)) throw Error(ErrorCode::kInvalidInput, "rates must be > 0");
  if (!(duration > 0.0)) throw Error(ErrorCode::kInvalidInput, "duration must be > 0");
  (void)imu_per_obs();
  if (!(sigma_p_range[0] >= 0.0) || sigma_p_range[1] < sigma_p_range[0]) {
    throw Error(ErrorCode::kInvalidInput, "sigma_p range must satisfy 0 <= lo <= hi");
  }
  if (!bias_g.allFinite() || !bias_a.allFinite() || !gravity.allFinite()) {
    throw Error(ErrorCode::kInvalidInput, "biases and gravity must be finite");
  }
  int anchors = 0;
  for (std::size_t i = 0; i < landmarks.size(); ++i) {
    anchors += landmarks[i].anchor ? 1 : 0;
    for (std::size_t j = 0; j < i; ++j) {
      if (landmarks[i].id == landmarks[j].id) {
        throw Error(ErrorCode::kDuplicateLandmark, "landmark id " + std::to_string(landmarks[i].id) + " repeated");
      }
    }
  }
  if (anchors < 1) throw Error(ErrorCode::kInvalidInput, "at least one anchor landmark is required");
}

int ScenarioConfig::imu_per_obs() const {
  const double ratio = imu_rate / obs_rate;
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(ratio - k) > 1e-9 * ratio) {
    throw Error(ErrorCode::kInvalidInput, "imu rate must be an integer multiple of the observation rate");
  }
  return static_cast<int>(k);
}

std::vector<LandmarkId> ScenarioConfig::anchor_ids() const {
  std::vector<LandmarkId> ids;
  for (const auto& l : landmarks) {
    if (l.anchor) ids.push_back(l.id);
  }
  return ids;
}

std::vector<double> draw_landmark_sigmas(const ScenarioConfig& config) {
  auto rng = make_engine(config.seed, kSigmaStream);
  std::uniform_real_distribution<double> u(config.sigma_p_range[0], config.sigma_p_range[1]);
  std::vector<double> out;
  out.reserve(config.landmarks.size());
  for (std::size_t i = 0; i < config.landmarks.size(); ++i) {
    out.push_back(config.sigma_p_range[0] == config.sigma_p_range[1] ? config.sigma_p_range[0] : u(rng));
  }
  return out;
}

std::vector<ImuSample> synthesize_imu(const std::vector<TruthSample>& truth, const ScenarioConfig& config,
                                      std::vector<Vec3>* bias_g, std::vector<Vec3>* bias_a) {
  auto noise_rng = make_engine(config.seed, kImuNoise);
  auto walk_rng = make_engine(config.seed, kBiasWalk);
  const double dt = 1.0 / config.imu_rate;
  const double white_scale = 1.0 / std::sqrt(dt);
  const double walk_scale = std::sqrt(dt);

  Vec3 bg = config.bias_g;
  Vec3 ba = config.bias_a;
  std::vector<ImuSample> out;
  out.reserve(truth.size());
  if (bias_g != nullptr) bias_g->clear();
  if (bias_a != nullptr) bias_a->clear();
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const TruthSample& s = truth[k];
    if (k > 0) {
      bg += gaussian3(walk_rng, config.noise.sigma_bg * walk_scale);
      ba += gaussian3(walk_rng, config.noise.sigma_ba * walk_scale);
    }
    const Vec3 eps_g = gaussian3(noise_rng, config.noise.sigma_g * white_scale);
    const Vec3 eps_a = gaussian3(noise_rng, config.noise.sigma_a * white_scale);
    const Mat3 A = rotation_matrix(s.q);
    ImuSample m;
    m.t = s.t;
    m.gyro = s.omega - bg - eps_g;
    m.accel = A.transpose() * (s.accel_inertial + config.gravity) - ba - eps_a;
    out.push_back(m);
    if (bias_g != nullptr) bias_g->push_back(bg);
    if (bias_a != nullptr) bias_a->push_back(ba);
  }
  return out;
}

std::vector<LandmarkObservation> synthesize_observations(const std::vector<TruthSample>& truth,
                                                         const ScenarioConfig& config,
                                                         const std::vector<double>& sigma_p,
                                                         std::vector<std::size_t>* imu_index) {
  if (sigma_p.size() != config.landmarks.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one sigma_p per landmark is required");
  }
  auto rng = make_engine(config.seed, kObsNoise);
  const auto stride = static_cast<std::size_t>(config.imu_per_obs());
  std::vector<LandmarkObservation> out;
  if (imu_index != nullptr) imu_index->clear();
  for (std::size_t k = 0; k < truth.size(); k += stride) {
    const TruthSample& s = truth[k];
    const Mat3 At = rotation_matrix(s.q).transpose();
    LandmarkObservation obs;
    obs.t = s.t;
    obs.entries.reserve(config.landmarks.size());
    for (std::size_t i = 0; i < config.landmarks.size(); ++i) {
      const LandmarkSpec& l = config.landmarks[i];
      // Draw even when hidden so visibility does not shift the noise sequence.
      const Vec3 noise = gaussian3(rng, sigma_p[i]);
      if (config.visible && !config.visible(s.t, l.id)) continue;
      obs.entries.push_back({l.id, At * (l.position - s.r) + noise});
    }
    out.push_back(std::move(obs));
    if (imu_index != nullptr) imu_index->push_back(k);
  }
  return out;
}

SensorStreams simulate(const ScenarioConfig& config) {
  config.validate();
  SensorStreams out;
  const Trajectory trajectory(config.trajectory);
  out.truth = generate_trajectory(trajectory, config.imu_rate, config.duration);
  out.imu = synthesize_imu(out.truth, config, &out.true_bias_g, &out.true_bias_a);
  out.sigma_p = draw_landmark_sigmas(config);
  out.observations = synthesize_observations(out.truth, config, out.sigma_p, &out.obs_imu_index);
  return out;
}

}  // namespace aslam
