#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "aslam/rotation.hpp"

namespace aslam {

using LandmarkId = std::int64_t;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Offsets into the error state (dq_v, dr, dv, db_g, db_a, drho_1 .. drho_n).
namespace idx {
inline constexpr int kAtt = 0;
inline constexpr int kPos = 3;
inline constexpr int kVel = 6;
inline constexpr int kBiasGyro = 9;
inline constexpr int kBiasAccel = 12;
inline constexpr int kCore = 15;
inline constexpr int landmark(int k) { return kCore + 3 * k; }
}  // namespace idx

inline int error_dim(int n_landmarks) { return idx::kCore + 3 * n_landmarks; }

/// Continuous white-noise intensities, each applied isotropically per axis.
/// Units: sigma_g rad/s/sqrt(Hz), sigma_bg rad/s^2/sqrt(Hz), sigma_a m/s^2/sqrt(Hz),
/// sigma_ba m/s^3/sqrt(Hz).
struct NoiseSpec {
  double sigma_g = 0.0;
  double sigma_bg = 0.0;
  double sigma_a = 0.0;
  double sigma_ba = 0.0;

  void validate() const;
  /// diag(sigma_g^2 I, sigma_bg^2 I, sigma_a^2 I, sigma_ba^2 I), ordered as G's columns.
  Eigen::Matrix<double, 12, 12> covariance() const;
};

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

struct ModelConstants {
  Vec3 gravity{0.0, 0.0, -9.81};
};

struct Landmark {
  LandmarkId id = 0;
  Vec3 position = Vec3::Zero();
};

/// Full estimate: attitude, position, velocity, biases, estimated landmarks, plus the
/// anchor landmarks that fix the map and are not part of the error state.
struct FilterState {
  Quaternion q;
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  std::vector<Landmark> landmarks;
  std::vector<Landmark> anchors;

  int n_landmarks() const { return static_cast<int>(landmarks.size()); }
  int dim() const { return error_dim(n_landmarks()); }

  /// Slot of an estimated landmark, or -1.
  int landmark_slot(LandmarkId id) const;
  /// Slot of an anchor, or -1.
  int anchor_slot(LandmarkId id) const;
  bool knows(LandmarkId id) const { return landmark_slot(id) >= 0 || anchor_slot(id) >= 0; }
};

struct Jacobians {
  MatrixXd F;
  MatrixXd G;
};

/// Linearized error dynamics d(dx)/dt = F dx + G eps about a nominal point.
Jacobians continuous_jacobians(const Quaternion& q_nom, const Vec3& omega_nom, const Vec3& a_nom, int n);

struct NominalImu {
  Vec3 omega;
  Vec3 accel;
};

/// Trapezoidal time-average of the samples plus current bias estimates.
NominalImu nominal_imu(std::span<const ImuSample> samples, const Vec3& bg_hat, const Vec3& ba_hat);

enum class DiscretizationMode {
  kExact,  ///< exact exponential of F; Van Loan process noise
  kPaper,  ///< closed-form truncated blocks exactly as published
};

/// Coefficients of Lambda_k(t) = alpha I + beta [w x] + gamma [w x]^2.
struct LambdaBlocks {
  Mat3 L1;  ///< exp(-[w x] t)
  Mat3 L2;  ///< integral of L1
  Mat3 L3;  ///< integral of L2
  Mat3 L4;  ///< integral of L3
};

LambdaBlocks lambda_blocks(const Vec3& omega, double tau);
/// Second-order Taylor truncation of L1, L2, L3 (L4 left zero).
LambdaBlocks lambda_blocks_simplified(const Vec3& omega, double tau);

/// 15x15 transition of (dq_v, dr, dv, db_g, db_a) over dt.
Mat15 core_transition(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                      DiscretizationMode mode = DiscretizationMode::kExact);

/// Dense (15+3n)^2 transition diag(core, I_3n).
MatrixXd state_transition(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt, int n,
                          DiscretizationMode mode = DiscretizationMode::kExact);

/// Published closed-form process-noise blocks (index 1..5 = dq_v, dr, dv, db_g, db_a).
struct PaperNoiseBlocks {
  Mat3 Q11, Q22, Q31, Q33, Q41, Q43, Q44, Q55;
};

PaperNoiseBlocks paper_noise_blocks(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                                    const NoiseSpec& noise);

struct CoreDiscretization {
  Mat15 Phi;
  Mat15 Q;
};

/// Van Loan construction: one augmented matrix exponential yields Phi and Q.
CoreDiscretization van_loan(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                            const NoiseSpec& noise);

Mat15 core_process_noise(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                         const NoiseSpec& noise, DiscretizationMode mode = DiscretizationMode::kExact);

/// Dense (15+3n)^2 process noise diag(core, 0).
MatrixXd process_noise(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                       const NoiseSpec& noise, int n, DiscretizationMode mode = DiscretizationMode::kExact);

/// Discrete model for one filter interval. Only the 15x15 core is stored; the landmark
/// block of Phi is identity and of Q is zero.
struct DiscreteModel {
  Mat15 Phi = Mat15::Identity();
  Mat15 Q = Mat15::Zero();
  double dt = 0.0;
  int n = 0;

  MatrixXd dense_phi() const;
  MatrixXd dense_q() const;
};

DiscreteModel discretize(const Vec3& omega_bar, const Vec3& a_bar, const RotationMatrix& A_nom, double dt,
                         const NoiseSpec& noise, int n, DiscretizationMode mode = DiscretizationMode::kExact);

/// Zero-noise propagation of the full state over [samples.front().t, samples.front().t + dt].
/// Attitude follows the averaged body rate; velocity and position integrate the specific
/// force along that attitude with Simpson's rule per sample interval.
FilterState propagate_nonlinear(const FilterState& state, std::span<const ImuSample> samples,
                                const ModelConstants& constants, double dt);
/// Same as propagate_nonlinear, touching only q, r and v of `state`.
void propagate_nonlinear_in_place(FilterState& state, std::span<const ImuSample> samples,
                                  const ModelConstants& constants, double dt);

}  // namespace aslam
