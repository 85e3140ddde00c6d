#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "aslam/model.hpp"
#include "aslam/observation.hpp"

namespace aslam {

/// Optional start-up uncertainty. The mean pose stays at the origin with identity attitude;
/// the default (zero) gives the all-zero vehicle covariance block of the nominal start-up.
struct InitialPrior {
  double attitude_sigma = 0.0;    ///< rad, per axis
  double position_sigma = 0.0;    ///< m, per axis
  double bias_gyro_sigma = 0.0;   ///< rad/s
  double bias_accel_sigma = 0.0;  ///< m/s^2
};

struct FilterEstimate {
  FilterState state;
  MatrixXd P;
};

/// Start-up from the first landmark epoch: the body frame coincides with the inertial
/// frame, anchors are fixed at their observed positions, all other observed landmarks
/// become estimated states seeded at their observations. R0 is the 3m x 3m noise
/// covariance of `first` in entry order. Landmark covariance is R0 plus the pose prior mapped
/// through the landmark initialization Jacobian.
FilterEstimate initialize(const LandmarkObservation& first, std::span<const LandmarkId> anchor_ids,
                          const MatrixXd& R0, const InitialPrior& prior = {});

/// K = P H^T (H P H^T + R)^-1 via a Cholesky solve.
MatrixXd kalman_gain(const MatrixXd& P_minus, const MatrixXd& H, const MatrixXd& R);

/// Scratch buffers for the measurement update, reused across epochs.
struct UpdateWorkspace {
  MatrixXd PHt;
  MatrixXd HPHt;
  MatrixXd S;
  MatrixXd Kt;
  MatrixXd K;
  MatrixXd IKH;
  MatrixXd T;
  MatrixXd KR;
  VectorXd dx;
  Eigen::LLT<MatrixXd> llt;
};

struct UpdateOutcome {
  bool large_correction = false;  ///< |dq_v| reached 1 and was scaled back
};

/// Measurement update in place. Uses the nonlinear residual, recombines the attitude
/// deviation with q_bar, and updates P in Joseph form. On return ws.HPHt holds
/// H P^- H^T and ws.S the innovation covariance.
UpdateOutcome innovate_in_place(FilterState& state, MatrixXd& P, const Quaternion& q_bar, const VectorXd& residual,
                                const MatrixXd& H, const MatrixXd& R, UpdateWorkspace& ws);

struct InnovationResult {
  FilterState state;
  MatrixXd P;
  VectorXd residual;
  bool large_correction = false;
};

InnovationResult innovate(const FilterState& state, const MatrixXd& P_minus, const Quaternion& q_bar,
                          const VectorXd& z, const VectorXd& h_pred, const MatrixXd& H, const MatrixXd& R);

/// P <- Phi P Phi^T + Q using the block structure; the landmark block is untouched.
/// `scratch` is resized to 3n x 15 as needed.
void propagate_covariance(const DiscreteModel& model, MatrixXd& P, MatrixXd& scratch);

struct Prediction {
  FilterState state;
  MatrixXd P;
  Quaternion q_bar;  ///< nominal attitude at the end of the interval
};

Prediction predict(const FilterState& state, const MatrixXd& P, const DiscreteModel& model,
                   std::span<const ImuSample> samples, const ModelConstants& constants);

/// Appends a newly seen landmark at A(q_bar) z_new + r, with cross-covariance J P and
/// marginal A R_new A^T + J P J^T, J = [-2 A [z_new x], I, 0].
FilterEstimate augment_landmark(const FilterState& state, const MatrixXd& P, const Quaternion& q_bar, LandmarkId id,
                                const Vec3& z_new, const Mat3& R_new);

/// Sliding window of the last w residual vectors with a running mean of outer products.
class ResidualWindow {
 public:
  explicit ResidualWindow(int capacity = 100);

  /// Empties the window and binds it to a landmark layout.
  void reset(std::span<const LandmarkId> layout = {});
  bool matches(std::span<const LandmarkId> layout) const;
  const std::vector<LandmarkId>& layout() const { return layout_; }

  void push(const VectorXd& residual);

  int capacity() const { return capacity_; }
  int size() const { return count_; }
  bool full() const { return count_ >= capacity_; }
  int dim() const { return static_cast<int>(w_hat_.rows()); }

  /// Running estimate updated with W += (r r^T - r_old r_old^T) / w.
  const MatrixXd& recursive_estimate() const { return w_hat_; }
  /// Direct average of the stored outer products.
  MatrixXd batch_estimate() const;

 private:
  int capacity_;
  int count_ = 0;
  int head_ = 0;
  std::vector<LandmarkId> layout_;
  MatrixXd buffer_;  // dim x capacity ring buffer
  MatrixXd w_hat_;
};

/// Project a symmetric matrix onto {X : X >= floor I} by clamping eigenvalues.
MatrixXd project_psd(const MatrixXd& M, double floor);

/// Which entries of R_hat are estimated. kBlockDiagonal keeps one 3x3 block per landmark and
/// zeroes the cross-landmark blocks; kFull estimates every entry.
enum class NoiseStructure { kBlockDiagonal, kFull };

/// Projects each 3x3 diagonal block of M onto {X : X >= floor I} and zeroes the rest.
void project_psd_blocks(const MatrixXd& M, double floor, MatrixXd& out);

/// R_hat = W_hat - H P^- H^T, projected with an eigenvalue floor. Returns prior_R
/// unchanged while the window is not yet full.
MatrixXd adapt_noise(const ResidualWindow& window, const MatrixXd& H, const MatrixXd& P_minus, const MatrixXd& prior_R,
                     double eigen_floor = 1e-6, NoiseStructure structure = NoiseStructure::kFull);

struct FilterSettings {
  NoiseSpec noise;
  ModelConstants constants;
  double sigma_p_prior = 0.2;  ///< per-axis landmark noise std assumed before adaptation, m
  InitialPrior prior;
  int window = 100;
  bool adaptive = true;
  double eigen_floor = 1e-6;  ///< m^2
  NoiseStructure noise_structure = NoiseStructure::kBlockDiagonal;
  DiscretizationMode mode = DiscretizationMode::kExact;
};

struct StepDiagnostics {
  double t = 0.0;
  int state_dim = 0;
  int n_updated = 0;    ///< landmarks used in the update
  int n_augmented = 0;  ///< landmarks appended this epoch
  VectorXd residual;
  MatrixXd innovation_cov;
  bool large_correction = false;
  bool adapted_noise_in_use = false;
  double quat_norm_deviation = 0.0;
  double p_asymmetry = 0.0;
  std::optional<double> orientation_error;
};

/// Adaptive error-state SLAM filter. Single writer; copyable and movable between threads.
class AdaptiveSlamFilter {
 public:
  explicit AdaptiveSlamFilter(FilterSettings settings);

  void initialize(const LandmarkObservation& first, std::span<const LandmarkId> anchor_ids);
  bool initialized() const { return initialized_; }
  /// Replaces the positions of already-initialized anchors, e.g. with surveyed values.
  void set_anchor_positions(std::span<const Landmark> anchors);

  /// Advances from the current time to samples.back().t. The samples must span the
  /// interval including both endpoints; obs, when present, is stamped at the end.
  const StepDiagnostics& step(std::span<const ImuSample> samples, const LandmarkObservation* obs = nullptr,
                              const Quaternion* reference = nullptr);

  double time() const { return t_; }
  const FilterState& state() const { return state_; }
  const MatrixXd& covariance() const { return P_; }
  const FilterSettings& settings() const { return settings_; }
  const ResidualWindow& residual_window() const { return window_; }
  /// Measurement covariance that the next update over `residual_window().layout()` will use.
  const MatrixXd& noise_estimate() const { return R_adapted_; }
  bool has_adapted_noise() const { return have_adapted_; }

 private:
  void prior_noise(int n_ids, MatrixXd& R) const;

  FilterSettings settings_;
  bool initialized_ = false;
  double t_ = 0.0;
  FilterState state_;
  MatrixXd P_;
  ResidualWindow window_;
  MatrixXd R_adapted_;
  bool have_adapted_ = false;

  UpdateWorkspace ws_;
  MatrixXd cov_scratch_;
  MatrixXd r_scratch_;
  MatrixXd H_;
  MatrixXd R_;
  VectorXd z_;
  VectorXd h_;
  VectorXd residual_;
  std::vector<LandmarkId> update_ids_;
  std::vector<LandmarkId> new_ids_;
  StepDiagnostics diag_;
};

}  // namespace aslam
