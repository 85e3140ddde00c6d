#include "aslam/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

#include "aslam/error.hpp"

namespace aslam {

namespace {

// f_k(x) = sum_j (-1)^j x^(2j) / (2j + k)!, i.e. the remainder families
// sin(x)/x, (1-cos x)/x^2, (x-sin x)/x^3, (cos x-1+x^2/2)/x^4, (sin x-x+x^3/6)/x^5.
double remainder_family(int k, double x) {
  if (x < 1.5) {
    const double x2 = x * x;
    double fact = 1.0;
    for (int i = 2; i <= k; ++i) fact *= i;
    double term = 1.0 / fact;
    double sum = term;
    for (int j = 1; j < 30; ++j) {
      term *= -x2 / ((2 * j + k - 1) * (2 * j + k));
      sum += term;
      if (std::abs(term) < 1e-20 * std::abs(sum)) break;
    }
    return sum;
  }
  const double s = std::sin(x);
  const double c = std::cos(x);
  switch (k) {
    case 1: return s / x;
    case 2: return (1.0 - c) / (x * x);
    case 3: return (x - s) / (x * x * x);
    case 4: return (c - 1.0 + 0.5 * x * x) / (x * x * x * x);
    case 5: return (s - x + x * x * x / 6.0) / (x * x * x * x * x);
    default: break;
  }
  throw Error(ErrorCode::kInvalidInput, "remainder family index out of range");
}

void set_block(Mat15& m, int row, int col, const Mat3& b) { m.block<3, 3>(row, col) = b; }

}  // namespace

void NoiseSpec::validate() const {
  for (double s : {sigma_g, sigma_bg, sigma_a, sigma_ba}) {
    if (!std::isfinite(s) || s < 0.0) throw Error(ErrorCode::kInvalidInput, "noise intensities must be >= 0");
  }
}

Eigen::Matrix<double, 12, 12> NoiseSpec::covariance() const {
  Eigen::Matrix<double, 12, 1> d;
  d << Vec3::Constant(sigma_g * sigma_g), Vec3::Constant(sigma_bg * sigma_bg), Vec3::Constant(sigma_a * sigma_a),
      Vec3::Constant(sigma_ba * sigma_ba);
  return d.asDiagonal();
}

int FilterState::landmark_slot(LandmarkId id) const {
  for (std::size_t k = 0; k < landmarks.size(); ++k) {
    if (landmarks[k].id == id) return static_cast<int>(k);
  }
  return -1;
}

int FilterState::anchor_slot(LandmarkId id) const {
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (anchors[k].id == id) return static_cast<int>(k);
  }
  return -1;
}

Jacobians continuous_jacobians(const Quaternion& q_nom, const Vec3& omega_nom, const Vec3& a_nom, int n) {
  if (n < 0) throw Error(ErrorCode::kInvalidInput, "landmark count must be >= 0");
  const int dim = error_dim(n);
  const Mat3 A = rotation_matrix(q_nom);
  Jacobians j{MatrixXd::Zero(dim, dim), MatrixXd::Zero(dim, 12)};
  j.F.block<3, 3>(idx::kAtt, idx::kAtt) = -skew(omega_nom);
  j.F.block<3, 3>(idx::kAtt, idx::kBiasGyro) = 0.5 * Mat3::Identity();
  j.F.block<3, 3>(idx::kPos, idx::kVel) = Mat3::Identity();
  j.F.block<3, 3>(idx::kVel, idx::kAtt) = -2.0 * A * skew(a_nom);
  j.F.block<3, 3>(idx::kVel, idx::kBiasAccel) = A;

  j.G.block<3, 3>(idx::kAtt, 0) = 0.5 * Mat3::Identity();
  j.G.block<3, 3>(idx::kVel, 6) = A;
  j.G.block<3, 3>(idx::kBiasGyro, 3) = Mat3::Identity();
  j.G.block<3, 3>(idx::kBiasAccel, 9) = Mat3::Identity();
  return j;
}

NominalImu nominal_imu(std::span<const ImuSample> samples, const Vec3& bg_hat, const Vec3& ba_hat) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyWindow, "no IMU samples in the averaging window");
  if (samples.size() == 1) return {bg_hat + samples[0].gyro, ba_hat + samples[0].accel};

  Vec3 gyro_int = Vec3::Zero();
  Vec3 accel_int = Vec3::Zero();
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double h = samples[i + 1].t - samples[i].t;
    if (!(h > 0.0)) throw Error(ErrorCode::kInvalidInput, "IMU timestamps must be strictly increasing");
    gyro_int += 0.5 * h * (samples[i].gyro + samples[i + 1].gyro);
    accel_int += 0.5 * h * (samples[i].accel + samples[i + 1].accel);
  }
  const double span = samples.back().t - samples.front().t;
  return {bg_hat + gyro_int / span, ba_hat + accel_int / span};
}

LambdaBlocks lambda_blocks(const Vec3& omega, double tau) {
  const double x = omega.norm() * tau;
  const Mat3 K = skew(omega);
  const Mat3 K2 = K * K;
  const Mat3 I = Mat3::Identity();
  const double f1 = remainder_family(1, x);
  const double f2 = remainder_family(2, x);
  const double f3 = remainder_family(3, x);
  const double f4 = remainder_family(4, x);
  const double f5 = remainder_family(5, x);
  const double t2 = tau * tau;
  const double t3 = t2 * tau;
  const double t4 = t3 * tau;
  const double t5 = t4 * tau;
  return {I - tau * f1 * K + t2 * f2 * K2,
          tau * I - t2 * f2 * K + t3 * f3 * K2,
          0.5 * t2 * I - t3 * f3 * K + t4 * f4 * K2,
          t3 / 6.0 * I - t4 * f4 * K + t5 * f5 * K2};
}

LambdaBlocks lambda_blocks_simplified(const Vec3& omega, double tau) {
  const Mat3 K = skew(omega);
  const Mat3 K2 = K * K;
  const Mat3 I = Mat3::Identity();
  const double t2 = tau * tau;
  const double t3 = t2 * tau;
  return {I - tau * K + 0.5 * t2 * K2,
          tau * I - 0.5 * t2 * K + t3 / 6.0 * K2,
          0.5 * t2 * I - t3 / 6.0 * K + t2 * t2 / 24.0 * K2,
          Mat3::Zero()};
}

Mat15 core_transition(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                      DiscretizationMode mode) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidInput, "transition interval must be > 0");
  const LambdaBlocks L = lambda_blocks(omega_bar, dt);
  const Mat3 I = Mat3::Identity();
  const Mat3 Sa = A_nom * skew(a_bar);
  Mat15 Phi = Mat15::Zero();

  if (mode == DiscretizationMode::kPaper) {
    // Published form, including its zero position-position and velocity-velocity
    // blocks and the missing accelerometer-bias coupling.
    set_block(Phi, idx::kAtt, idx::kAtt, L.L1);
    set_block(Phi, idx::kAtt, idx::kBiasGyro, 0.5 * L.L2);
    set_block(Phi, idx::kPos, idx::kVel, dt * I);
    set_block(Phi, idx::kVel, idx::kAtt, -Sa * L.L2);
    set_block(Phi, idx::kVel, idx::kBiasGyro, 0.5 * L.L3);
    set_block(Phi, idx::kBiasGyro, idx::kBiasGyro, I);
    set_block(Phi, idx::kBiasAccel, idx::kBiasAccel, I);
    return Phi;
  }

  set_block(Phi, idx::kAtt, idx::kAtt, L.L1);
  set_block(Phi, idx::kAtt, idx::kBiasGyro, 0.5 * L.L2);

  set_block(Phi, idx::kPos, idx::kAtt, -2.0 * Sa * L.L3);
  set_block(Phi, idx::kPos, idx::kPos, I);
  set_block(Phi, idx::kPos, idx::kVel, dt * I);
  set_block(Phi, idx::kPos, idx::kBiasGyro, -Sa * L.L4);
  set_block(Phi, idx::kPos, idx::kBiasAccel, 0.5 * dt * dt * A_nom);

  set_block(Phi, idx::kVel, idx::kAtt, -2.0 * Sa * L.L2);
  set_block(Phi, idx::kVel, idx::kVel, I);
  set_block(Phi, idx::kVel, idx::kBiasGyro, -Sa * L.L3);
  set_block(Phi, idx::kVel, idx::kBiasAccel, dt * A_nom);

  set_block(Phi, idx::kBiasGyro, idx::kBiasGyro, I);
  set_block(Phi, idx::kBiasAccel, idx::kBiasAccel, I);
  return Phi;
}

MatrixXd state_transition(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt, int n,
                          DiscretizationMode mode) {
  MatrixXd Phi = MatrixXd::Identity(error_dim(n), error_dim(n));
  Phi.topLeftCorner<15, 15>() = core_transition(omega_bar, a_bar, A_nom, dt, mode);
  return Phi;
}

PaperNoiseBlocks paper_noise_blocks(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                                    const NoiseSpec& noise) {
  const double sg2 = noise.sigma_g * noise.sigma_g;
  const double sbg2 = noise.sigma_bg * noise.sigma_bg;
  const double sa2 = noise.sigma_a * noise.sigma_a;
  const double sba2 = noise.sigma_ba * noise.sigma_ba;
  const Mat3 I = Mat3::Identity();
  const Mat3 K = skew(omega_bar);
  const Mat3 K2 = K * K;
  const Mat3 Sa = A_nom * skew(a_bar);
  const Mat3 SAa = skew(A_nom * a_bar);
  const Mat3 SAw = skew(A_nom * omega_bar);
  const double t = dt;
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t, t6 = t5 * t, t7 = t6 * t;

  PaperNoiseBlocks b;
  b.Q11 = (sg2 / 4.0 * t + sbg2 / 12.0 * t3) * I + sbg2 / 240.0 * t5 * K2;
  b.Q22 = sa2 / 3.0 * t3 * I;
  b.Q31 = sbg2 / 32.0 * t4 * I - sg2 / 8.0 * t2 * Sa + (sbg2 / 240.0 * t5 * I - sg2 / 24.0 * t3 * Sa) * K +
          (sbg2 / 576.0 * t6 * I - sg2 / 96.0 * t4 * Sa) * K2;
  const Mat3 cross_term = SAa * SAw;
  b.Q33 = sbg2 / 80.0 * t5 * I - sbg2 / 12.0 * t3 * SAa + sbg2 / 2016.0 * t7 * K2 -
          sg2 / 240.0 * t5 * cross_term * cross_term;
  b.Q41 = sbg2 / 4.0 * t2 * I + sbg2 / 48.0 * t4 * K2;
  b.Q43 = sbg2 / 240.0 * t3 * (20.0 * I + 5.0 * t * K + t2 * K2);
  b.Q44 = sbg2 * t * I;
  // Accelerometer-bias walk intensity squared, matching the other three channels.
  b.Q55 = sba2 * t * I;
  return b;
}

CoreDiscretization van_loan(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                            const NoiseSpec& noise) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidInput, "discretization interval must be > 0");
  noise.validate();
  Mat15 F = Mat15::Zero();
  F.block<3, 3>(idx::kAtt, idx::kAtt) = -skew(omega_bar);
  F.block<3, 3>(idx::kAtt, idx::kBiasGyro) = 0.5 * Mat3::Identity();
  F.block<3, 3>(idx::kPos, idx::kVel) = Mat3::Identity();
  F.block<3, 3>(idx::kVel, idx::kAtt) = -2.0 * A_nom * skew(a_bar);
  F.block<3, 3>(idx::kVel, idx::kBiasAccel) = A_nom;

  Eigen::Matrix<double, 15, 12> G = Eigen::Matrix<double, 15, 12>::Zero();
  G.block<3, 3>(idx::kAtt, 0) = 0.5 * Mat3::Identity();
  G.block<3, 3>(idx::kVel, 6) = A_nom;
  G.block<3, 3>(idx::kBiasGyro, 3) = Mat3::Identity();
  G.block<3, 3>(idx::kBiasAccel, 9) = Mat3::Identity();

  Eigen::Matrix<double, 30, 30> M = Eigen::Matrix<double, 30, 30>::Zero();
  M.topLeftCorner<15, 15>() = -F * dt;
  M.topRightCorner<15, 15>() = G * noise.covariance() * G.transpose() * dt;
  M.bottomRightCorner<15, 15>() = F.transpose() * dt;
  const Eigen::Matrix<double, 30, 30> E = M.exp();

  CoreDiscretization out;
  out.Phi = E.bottomRightCorner<15, 15>().transpose();
  out.Q = out.Phi * E.topRightCorner<15, 15>();
  out.Q = 0.5 * (out.Q + out.Q.transpose()).eval();
  return out;
}

Mat15 core_process_noise(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                         const NoiseSpec& noise, DiscretizationMode mode) {
  if (mode == DiscretizationMode::kExact) return van_loan(omega_bar, a_bar, A_nom, dt, noise).Q;

  const PaperNoiseBlocks b = paper_noise_blocks(omega_bar, a_bar, A_nom, dt, noise);
  Mat15 Q = Mat15::Zero();
  auto put = [&Q](int i, int j, const Mat3& block) {
    Q.block<3, 3>(3 * i, 3 * j) = block;
    Q.block<3, 3>(3 * j, 3 * i) = block.transpose();
  };
  auto put_diag = [&Q](int i, const Mat3& block) { Q.block<3, 3>(3 * i, 3 * i) = 0.5 * (block + block.transpose()); };
  put_diag(0, b.Q11);
  put_diag(1, b.Q22);
  put(2, 0, b.Q31);
  put_diag(2, b.Q33);
  put(3, 0, b.Q41);
  put(3, 2, b.Q43);
  put_diag(3, b.Q44);
  put_diag(4, b.Q55);
  return Q;
}

MatrixXd process_noise(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                       const NoiseSpec& noise, int n, DiscretizationMode mode) {
  MatrixXd Q = MatrixXd::Zero(error_dim(n), error_dim(n));
  Q.topLeftCorner<15, 15>() = core_process_noise(omega_bar, a_bar, A_nom, dt, noise, mode);
  return Q;
}

MatrixXd DiscreteModel::dense_phi() const {
  MatrixXd m = MatrixXd::Identity(error_dim(n), error_dim(n));
  m.topLeftCorner<15, 15>() = Phi;
  return m;
}

MatrixXd DiscreteModel::dense_q() const {
  MatrixXd m = MatrixXd::Zero(error_dim(n), error_dim(n));
  m.topLeftCorner<15, 15>() = Q;
  return m;
}

DiscreteModel discretize(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                         const NoiseSpec& noise, int n, DiscretizationMode mode) {
  DiscreteModel m;
  m.dt = dt;
  m.n = n;
  m.Phi = core_transition(omega_bar, a_bar, A_nom, dt, mode);
  m.Q = core_process_noise(omega_bar, a_bar, A_nom, dt, noise, mode);
  return m;
}

FilterState propagate_nonlinear(const FilterState& state, std::span<const ImuSample> samples,
                                const ModelConstants& constants, double dt) {
  FilterState out = state;
  propagate_nonlinear_in_place(out, samples, constants, dt);
  return out;
}

void propagate_nonlinear_in_place(FilterState& state, std::span<const ImuSample> samples,
                                  const ModelConstants& constants, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidInput, "propagation interval must be > 0");
  const NominalImu nominal = nominal_imu(samples, state.bg, state.ba);
  const double t0 = samples.front().t;
  const double t1 = t0 + dt;

  auto accel_at = [&samples](double t) -> Vec3 {
    if (t <= samples.front().t) return samples.front().accel;
    if (t >= samples.back().t) return samples.back().accel;
    const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                     [](double tv, const ImuSample& s) { return tv < s.t; });
    const ImuSample& b = *it;
    const ImuSample& a = *(it - 1);
    const double w = (t - a.t) / (b.t - a.t);
    return (1.0 - w) * a.accel + w * b.accel;
  };
  const Quaternion q0 = state.q;
  auto specific_force = [&](double t) -> Vec3 {
    const Quaternion q = quat_propagate(q0, nominal.omega, t - t0);
    return rotation_matrix(q) * (accel_at(t) + state.ba) - constants.gravity;
  };

  FilterState& out = state;
  double ta = t0;
  Vec3 fa = specific_force(ta);
  std::size_t next = 0;
  while (ta < t1) {
    while (next < samples.size() && samples[next].t <= ta) ++next;
    const double tb = (next < samples.size() && samples[next].t < t1) ? samples[next].t : t1;
    const double h = tb - ta;
    const Vec3 fm = specific_force(0.5 * (ta + tb));
    const Vec3 fb = specific_force(tb);
    out.r += out.v * h + h * h / 6.0 * (fa + 2.0 * fm);
    out.v += h / 6.0 * (fa + 4.0 * fm + fb);
    ta = tb;
    fa = fb;
  }
  out.q = quat_propagate(q0, nominal.omega, dt);
}

}  // namespace aslam
