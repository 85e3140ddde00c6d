#include "aslam/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "aslam/error.hpp"

namespace aslam {

namespace {

constexpr double kMaxAttitudeNorm = 1.0 - 1e-9;

void symmetrize(MatrixXd& P) {
  const Eigen::Index n = P.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double m = 0.5 * (P(i, j) + P(j, i));
      P(i, j) = m;
      P(j, i) = m;
    }
  }
}

double max_asymmetry(const MatrixXd& P) {
  double worst = 0.0;
  const Eigen::Index n = P.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) worst = std::max(worst, std::abs(P(i, j) - P(j, i)));
  }
  return worst;
}

// Factorizes ws.S in place of ws.llt, regularizing once if needed.
void factorize_innovation(UpdateWorkspace& ws) {
  ws.llt.compute(ws.S);
  if (ws.llt.info() == Eigen::Success) return;
  const double scale = std::max(1.0, ws.S.diagonal().cwiseAbs().maxCoeff());
  ws.S.diagonal().array() += 1e-12 * scale;
  ws.llt.compute(ws.S);
  if (ws.llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularInnovation, "innovation covariance is not positive definite");
  }
}

// Writes S = H P H^T + R and K into the workspace.
void compute_gain(const MatrixXd& P, const MatrixXd& H, const MatrixXd& R, UpdateWorkspace& ws) {
  if (H.cols() != P.rows() || P.rows() != P.cols() || R.rows() != H.rows() || R.cols() != H.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "gain inputs have inconsistent shapes");
  }
  ws.PHt.resize(P.rows(), H.rows());
  ws.PHt.noalias() = P * H.transpose();
  ws.HPHt.resize(H.rows(), H.rows());
  ws.HPHt.noalias() = H * ws.PHt;
  symmetrize(ws.HPHt);
  ws.S = ws.HPHt;
  ws.S += R;
  factorize_innovation(ws);
  ws.Kt = ws.PHt.transpose();
  ws.llt.solveInPlace(ws.Kt);
  ws.K = ws.Kt.transpose();
}

void project_psd_into(const MatrixXd& M, double floor, MatrixXd& out) {
  out = M;
  symmetrize(out);
  out.diagonal().array() -= floor;
  Eigen::LLT<MatrixXd> llt(out);
  out.diagonal().array() += floor;
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(out);
  const VectorXd clamped = eig.eigenvalues().cwiseMax(floor);
  out.noalias() = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  symmetrize(out);
}

}  // namespace

FilterEstimate initialize(const LandmarkObservation& first, std::span<const LandmarkId> anchor_ids,
                          const MatrixXd& R0, const InitialPrior& prior) {
  first.validate();
  if (first.entries.empty()) throw Error(ErrorCode::kInvalidInput, "first observation is empty");
  if (anchor_ids.empty()) throw Error(ErrorCode::kInvalidInput, "at least one anchor landmark is required");
  const auto m = static_cast<Eigen::Index>(first.entries.size());
  if (R0.rows() != 3 * m || R0.cols() != 3 * m) {
    throw Error(ErrorCode::kDimensionMismatch, "R0 must be 3m x 3m for the first observation");
  }

  FilterEstimate out;
  for (std::size_t i = 0; i < anchor_ids.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (anchor_ids[i] == anchor_ids[j]) {
        throw Error(ErrorCode::kDuplicateLandmark, "anchor id " + std::to_string(anchor_ids[i]) + " repeated");
      }
    }
    const LandmarkMeasurement* e = first.find(anchor_ids[i]);
    if (e == nullptr) {
      throw Error(ErrorCode::kMissingLandmark, "anchor " + std::to_string(anchor_ids[i]) + " not in first observation");
    }
    out.state.anchors.push_back({e->id, e->z});
  }

  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& e = first.entries[static_cast<std::size_t>(i)];
    if (out.state.anchor_slot(e.id) >= 0) continue;
    out.state.landmarks.push_back({e.id, e.z});
    rows.push_back(i);
  }

  const int dim = out.state.dim();
  out.P = MatrixXd::Zero(dim, dim);
  // Attitude error is carried as the quaternion vector part, half the small angle.
  const double sq = 0.5 * prior.attitude_sigma;
  const double sr = prior.position_sigma;
  const double sg = prior.bias_gyro_sigma;
  const double sa = prior.bias_accel_sigma;
  out.P.block<3, 3>(idx::kAtt, idx::kAtt).diagonal().setConstant(sq * sq);
  out.P.block<3, 3>(idx::kPos, idx::kPos).diagonal().setConstant(sr * sr);
  out.P.block<3, 3>(idx::kBiasGyro, idx::kBiasGyro).diagonal().setConstant(sg * sg);
  out.P.block<3, 3>(idx::kBiasAccel, idx::kBiasAccel).diagonal().setConstant(sa * sa);

  const Eigen::Index nl = static_cast<Eigen::Index>(rows.size());
  if (nl > 0) {
    MatrixXd J = MatrixXd::Zero(3 * nl, idx::kCore);
    for (Eigen::Index a = 0; a < nl; ++a) {
      J.block<3, 3>(3 * a, idx::kAtt) = -2.0 * skew(first.entries[static_cast<std::size_t>(rows[a])].z);
      J.block<3, 3>(3 * a, idx::kPos) = Mat3::Identity();
    }
    const MatrixXd Pvv = out.P.topLeftCorner(idx::kCore, idx::kCore);
    const MatrixXd cross = J * Pvv;
    out.P.block(idx::kCore, 0, 3 * nl, idx::kCore) = cross;
    out.P.block(0, idx::kCore, idx::kCore, 3 * nl) = cross.transpose();
    MatrixXd corner = cross * J.transpose();
    for (Eigen::Index a = 0; a < nl; ++a) {
      for (Eigen::Index b = 0; b < nl; ++b) {
        corner.block<3, 3>(3 * a, 3 * b) += R0.block<3, 3>(3 * rows[a], 3 * rows[b]);
      }
    }
    out.P.block(idx::kCore, idx::kCore, 3 * nl, 3 * nl) = corner;
  }
  symmetrize(out.P);
  return out;
}

MatrixXd kalman_gain(const MatrixXd& P_minus, const MatrixXd& H, const MatrixXd& R) {
  UpdateWorkspace ws;
  compute_gain(P_minus, H, R, ws);
  return ws.K;
}

UpdateOutcome innovate_in_place(FilterState& state, MatrixXd& P, const Quaternion& q_bar, const VectorXd& residual,
                                const MatrixXd& H, const MatrixXd& R, UpdateWorkspace& ws) {
  if (P.rows() != state.dim() || residual.size() != H.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "update inputs do not match the state dimension");
  }
  compute_gain(P, H, R, ws);
  const Eigen::Index N = P.rows();

  ws.dx.resize(N);
  ws.dx.noalias() = ws.K * residual;

  UpdateOutcome outcome;
  Vec3 dqv = error_quat(state.q, q_bar).vec() + ws.dx.segment<3>(idx::kAtt);
  const double norm = dqv.norm();
  if (norm >= 1.0) {
    dqv *= kMaxAttitudeNorm / norm;
    outcome.large_correction = true;
  }
  const Quaternion dq(dqv, std::sqrt(std::max(0.0, 1.0 - dqv.squaredNorm())));
  state.q = otimes(dq, q_bar).normalized();
  state.r += ws.dx.segment<3>(idx::kPos);
  state.v += ws.dx.segment<3>(idx::kVel);
  state.bg += ws.dx.segment<3>(idx::kBiasGyro);
  state.ba += ws.dx.segment<3>(idx::kBiasAccel);
  for (int k = 0; k < state.n_landmarks(); ++k) {
    state.landmarks[static_cast<std::size_t>(k)].position += ws.dx.segment<3>(idx::landmark(k));
  }

  // Joseph form: (I - KH) P (I - KH)^T + K R K^T.
  ws.IKH.resize(N, N);
  ws.IKH.noalias() = -ws.K * H;
  ws.IKH.diagonal().array() += 1.0;
  ws.T.resize(N, N);
  ws.T.noalias() = ws.IKH * P;
  P.noalias() = ws.T * ws.IKH.transpose();
  ws.KR.resize(N, H.rows());
  ws.KR.noalias() = ws.K * R;
  P.noalias() += ws.KR * ws.K.transpose();
  symmetrize(P);
  return outcome;
}

InnovationResult innovate(const FilterState& state, const MatrixXd& P_minus, const Quaternion& q_bar,
                          const VectorXd& z, const VectorXd& h_pred, const MatrixXd& H, const MatrixXd& R) {
  if (z.size() != h_pred.size()) throw Error(ErrorCode::kDimensionMismatch, "z and h_pred differ in length");
  InnovationResult out{state, P_minus, z - h_pred, false};
  UpdateWorkspace ws;
  out.large_correction = innovate_in_place(out.state, out.P, q_bar, out.residual, H, R, ws).large_correction;
  return out;
}

void propagate_covariance(const DiscreteModel& model, MatrixXd& P, MatrixXd& scratch) {
  const Eigen::Index N = P.rows();
  if (N != error_dim(model.n) || P.cols() != N) {
    throw Error(ErrorCode::kDimensionMismatch, "covariance does not match the discrete model");
  }
  const Mat15 P11 = P.topLeftCorner<15, 15>();
  Mat15 core;
  core.noalias() = model.Phi * P11 * model.Phi.transpose();
  core += model.Q;
  P.topLeftCorner<15, 15>() = 0.5 * (core + core.transpose());

  const Eigen::Index L = N - idx::kCore;
  if (L == 0) return;
  scratch.resize(L, 15);
  scratch.noalias() = P.bottomLeftCorner(L, 15) * model.Phi.transpose();
  P.bottomLeftCorner(L, 15) = scratch;
  P.topRightCorner(15, L) = scratch.transpose();
}

Prediction predict(const FilterState& state, const MatrixXd& P, const DiscreteModel& model,
                   std::span<const ImuSample> samples, const ModelConstants& constants) {
  Prediction out{propagate_nonlinear(state, samples, constants, model.dt), P, {}};
  MatrixXd scratch;
  propagate_covariance(model, out.P, scratch);
  out.q_bar = out.state.q;
  return out;
}

FilterEstimate augment_landmark(const FilterState& state, const MatrixXd& P, const Quaternion& q_bar, LandmarkId id,
                                const Vec3& z_new, const Mat3& R_new) {
  if (state.knows(id)) {
    throw Error(ErrorCode::kDuplicateLandmark, "landmark " + std::to_string(id) + " is already part of the map");
  }
  if (P.rows() != state.dim() || P.cols() != state.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "covariance does not match the state dimension");
  }
  const Mat3 A = rotation_matrix(q_bar);
  const Eigen::Index N = P.rows();

  FilterEstimate out{state, MatrixXd::Zero(N + 3, N + 3)};
  out.state.landmarks.push_back({id, A * z_new + state.r});

  Eigen::Matrix<double, 3, Eigen::Dynamic> J = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, N);
  J.block<3, 3>(0, idx::kAtt) = -2.0 * A * skew(z_new);
  J.block<3, 3>(0, idx::kPos) = Mat3::Identity();
  const Eigen::Matrix<double, 3, Eigen::Dynamic> Upsilon = J * P;

  out.P.topLeftCorner(N, N) = P;
  out.P.bottomLeftCorner(3, N) = Upsilon;
  out.P.topRightCorner(N, 3) = Upsilon.transpose();
  const Mat3 corner = A * R_new * A.transpose() + Upsilon * J.transpose();
  out.P.bottomRightCorner<3, 3>() = 0.5 * (corner + corner.transpose());
  return out;
}

ResidualWindow::ResidualWindow(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw Error(ErrorCode::kInvalidInput, "window capacity must be >= 1");
}

void ResidualWindow::reset(std::span<const LandmarkId> layout) {
  layout_.assign(layout.begin(), layout.end());
  count_ = 0;
  head_ = 0;
  const auto d = 3 * static_cast<Eigen::Index>(layout_.size());
  buffer_.resize(d, capacity_);
  w_hat_.setZero(d, d);
}

bool ResidualWindow::matches(std::span<const LandmarkId> layout) const {
  return std::equal(layout.begin(), layout.end(), layout_.begin(), layout_.end());
}

void ResidualWindow::push(const VectorXd& residual) {
  if (count_ == 0 && layout_.empty() && w_hat_.rows() != residual.size()) {
    buffer_.resize(residual.size(), capacity_);
    w_hat_.setZero(residual.size(), residual.size());
  }
  if (residual.size() != w_hat_.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "residual length does not match the window layout");
  }
  const double inv_w = 1.0 / capacity_;
  const Eigen::Index d = residual.size();
  const bool evict = full();
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      double delta = residual(i) * residual(j);
      if (evict) delta -= buffer_(i, head_) * buffer_(j, head_);
      w_hat_(i, j) += inv_w * delta;
    }
  }
  buffer_.col(head_) = residual;
  head_ = (head_ + 1) % capacity_;
  if (!evict) ++count_;
}

MatrixXd ResidualWindow::batch_estimate() const {
  const Eigen::Index d = w_hat_.rows();
  MatrixXd W = MatrixXd::Zero(d, d);
  for (int k = 0; k < count_; ++k) W.noalias() += buffer_.col(k) * buffer_.col(k).transpose();
  return W / capacity_;
}

MatrixXd project_psd(const MatrixXd& M, double floor) {
  if (M.rows() != M.cols()) throw Error(ErrorCode::kDimensionMismatch, "project_psd needs a square matrix");
  MatrixXd out;
  project_psd_into(M, floor, out);
  return out;
}

void project_psd_blocks(const MatrixXd& M, double floor, MatrixXd& out) {
  if (M.rows() != M.cols() || M.rows() % 3 != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "block projection needs a square 3k x 3k matrix");
  }
  out.setZero(M.rows(), M.cols());
  MatrixXd block(3, 3);
  MatrixXd projected(3, 3);
  for (Eigen::Index i = 0; i < M.rows(); i += 3) {
    block = M.block<3, 3>(i, i);
    project_psd_into(block, floor, projected);
    out.block<3, 3>(i, i) = projected;
  }
}

MatrixXd adapt_noise(const ResidualWindow& window, const MatrixXd& H, const MatrixXd& P_minus, const MatrixXd& prior_R,
                     double eigen_floor, NoiseStructure structure) {
  if (!window.full()) return prior_R;
  if (H.rows() != window.dim()) throw Error(ErrorCode::kDimensionMismatch, "H rows do not match the window");
  const MatrixXd HPHt = H * P_minus * H.transpose();
  if (structure == NoiseStructure::kFull) return project_psd(window.recursive_estimate() - HPHt, eigen_floor);
  MatrixXd out;
  project_psd_blocks(window.recursive_estimate() - HPHt, eigen_floor, out);
  return out;
}

AdaptiveSlamFilter::AdaptiveSlamFilter(FilterSettings settings)
    : settings_(std::move(settings)), window_(settings_.window) {
  settings_.noise.validate();
  if (!(settings_.sigma_p_prior > 0.0)) throw Error(ErrorCode::kInvalidInput, "landmark noise prior must be > 0");
  if (!(settings_.eigen_floor > 0.0)) throw Error(ErrorCode::kInvalidInput, "eigenvalue floor must be > 0");
}

void AdaptiveSlamFilter::prior_noise(int n_ids, MatrixXd& R) const {
  const double var = settings_.sigma_p_prior * settings_.sigma_p_prior;
  R.setZero(3 * n_ids, 3 * n_ids);
  R.diagonal().setConstant(var);
}

void AdaptiveSlamFilter::initialize(const LandmarkObservation& first, std::span<const LandmarkId> anchor_ids) {
  MatrixXd R0;
  prior_noise(static_cast<int>(first.entries.size()), R0);
  FilterEstimate est = aslam::initialize(first, anchor_ids, R0, settings_.prior);
  state_ = std::move(est.state);
  P_ = std::move(est.P);
  t_ = first.t;
  window_.reset();
  have_adapted_ = false;
  R_adapted_.resize(0, 0);
  initialized_ = true;
  diag_ = StepDiagnostics{};
  diag_.t = t_;
  diag_.state_dim = state_.dim();
}

void AdaptiveSlamFilter::set_anchor_positions(std::span<const Landmark> anchors) {
  if (!initialized_) throw Error(ErrorCode::kInvalidInput, "filter used before initialize()");
  for (const Landmark& a : anchors) {
    const int slot = state_.anchor_slot(a.id);
    if (slot < 0) throw Error(ErrorCode::kMissingLandmark, "landmark " + std::to_string(a.id) + " is not an anchor");
    if (!a.position.allFinite()) throw Error(ErrorCode::kInvalidInput, "anchor position must be finite");
    state_.anchors[static_cast<std::size_t>(slot)].position = a.position;
  }
}

const StepDiagnostics& AdaptiveSlamFilter::step(std::span<const ImuSample> samples, const LandmarkObservation* obs,
                                                const Quaternion* reference) {
  if (!initialized_) throw Error(ErrorCode::kInvalidInput, "filter used before initialize()");
  if (samples.size() < 2) throw Error(ErrorCode::kEmptyWindow, "a step needs IMU samples at both interval ends");
  if (std::abs(samples.front().t - t_) > 1e-9) {
    throw Error(ErrorCode::kInvalidInput, "IMU window does not start at the filter time");
  }
  const double dt = samples.back().t - samples.front().t;
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidInput, "time must increase monotonically");

  // Linearize about the mid-interval attitude.
  const NominalImu nominal = nominal_imu(samples, state_.bg, state_.ba);
  const RotationMatrix A_mid = rotation_matrix(quat_propagate(state_.q, nominal.omega, 0.5 * dt));
  const DiscreteModel model =
      discretize(nominal.omega, nominal.accel, A_mid, dt, settings_.noise, state_.n_landmarks(), settings_.mode);
  propagate_nonlinear_in_place(state_, samples, settings_.constants, dt);
  propagate_covariance(model, P_, cov_scratch_);
  const Quaternion q_bar = state_.q;
  t_ = samples.back().t;

  diag_.t = t_;
  diag_.n_updated = 0;
  diag_.n_augmented = 0;
  diag_.large_correction = false;
  diag_.adapted_noise_in_use = false;
  diag_.residual.resize(0);
  diag_.innovation_cov.resize(0, 0);

  if (obs != nullptr) {
    obs->validate();
    if (std::abs(obs->t - t_) > 1e-9) throw Error(ErrorCode::kInvalidInput, "observation time does not match the step");

    update_ids_.clear();
    new_ids_.clear();
    for (const auto& a : state_.anchors) {
      if (obs->find(a.id) != nullptr) update_ids_.push_back(a.id);
    }
    for (const auto& l : state_.landmarks) {
      if (obs->find(l.id) != nullptr) update_ids_.push_back(l.id);
    }
    for (const auto& e : obs->entries) {
      if (!state_.knows(e.id)) new_ids_.push_back(e.id);
    }

    if (!update_ids_.empty()) {
      const auto m = static_cast<int>(update_ids_.size());
      const Eigen::Index rows = 3 * m;
      H_.resize(rows, state_.dim());
      observation_jacobian_into(state_, update_ids_, q_bar, H_);
      z_.resize(rows);
      h_.resize(rows);
      const Mat3 At = rotation_matrix(state_.q).transpose();
      for (int i = 0; i < m; ++i) {
        const auto id = update_ids_[static_cast<std::size_t>(i)];
        z_.segment<3>(3 * i) = obs->find(id)->z;
        h_.segment<3>(3 * i) = At * (landmark_position(state_, id) - state_.r);
      }
      residual_ = z_ - h_;

      const bool same_layout = window_.matches(update_ids_);
      if (settings_.adaptive && have_adapted_ && same_layout) {
        R_ = R_adapted_;
        diag_.adapted_noise_in_use = true;
      } else {
        prior_noise(m, R_);
      }

      const UpdateOutcome outcome = innovate_in_place(state_, P_, q_bar, residual_, H_, R_, ws_);
      diag_.large_correction = outcome.large_correction;
      diag_.n_updated = m;
      diag_.residual = residual_;
      diag_.innovation_cov = ws_.S;

      if (settings_.adaptive) {
        if (!same_layout) {
          window_.reset(update_ids_);
          have_adapted_ = false;
        }
        window_.push(residual_);
        if (window_.full()) {
          r_scratch_ = window_.recursive_estimate();
          r_scratch_ -= ws_.HPHt;
          if (settings_.noise_structure == NoiseStructure::kFull) {
            project_psd_into(r_scratch_, settings_.eigen_floor, R_adapted_);
          } else {
            project_psd_blocks(r_scratch_, settings_.eigen_floor, R_adapted_);
          }
          have_adapted_ = true;
        }
      }
    }

    if (!new_ids_.empty()) {
      const double var = settings_.sigma_p_prior * settings_.sigma_p_prior;
      const Mat3 R_new = var * Mat3::Identity();
      for (const LandmarkId id : new_ids_) {
        FilterEstimate grown = augment_landmark(state_, P_, state_.q, id, obs->find(id)->z, R_new);
        state_ = std::move(grown.state);
        P_ = std::move(grown.P);
      }
      diag_.n_augmented = static_cast<int>(new_ids_.size());
    }
  }

  diag_.state_dim = state_.dim();
  diag_.quat_norm_deviation = std::abs(state_.q.norm() - 1.0);
  diag_.p_asymmetry = max_asymmetry(P_);
  if (reference != nullptr) {
    diag_.orientation_error = orientation_error(state_.q, *reference);
  } else {
    diag_.orientation_error.reset();
  }
  return diag_;
}

}  // namespace aslam
