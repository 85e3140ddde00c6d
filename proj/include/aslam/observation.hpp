#pragma once

#include <span>
#include <vector>

#include "aslam/model.hpp"

namespace aslam {

struct LandmarkMeasurement {
  LandmarkId id = 0;
  Vec3 z = Vec3::Zero();  ///< body-frame landmark position, m
};

struct LandmarkObservation {
  double t = 0.0;
  std::vector<LandmarkMeasurement> entries;

  /// Throws on duplicate ids or non-finite values.
  void validate() const;
  std::vector<LandmarkId> ids() const;
  /// Stacked measurement vector for the given ids, in that order.
  VectorXd stacked(std::span<const LandmarkId> ids) const;
  const LandmarkMeasurement* find(LandmarkId id) const;
};

/// Inertial position of a known landmark (anchor or estimated); throws kMissingLandmark.
Vec3 landmark_position(const FilterState& state, LandmarkId id);

/// Stacked body-frame predictions A^T(q)(rho_i - r), in the order of ids.
VectorXd predict_observations(const FilterState& state, std::span<const LandmarkId> ids);

/// Sensitivity of the stacked predictions with respect to the error state, linearized at
/// the nominal attitude q_nom (defaults to state.q). Row block i is
/// [2[p_i x], -A^T, 0, 0, 0, ..., +A^T (estimated landmark column), ...] with
/// p_i = A^T (rho_i - r) the predicted body-frame position.
MatrixXd observation_jacobian(const FilterState& state, std::span<const LandmarkId> ids);
MatrixXd observation_jacobian(const FilterState& state, std::span<const LandmarkId> ids, const Quaternion& q_nom);

/// Writes the Jacobian into a preallocated matrix of size (3*ids) x state.dim().
void observation_jacobian_into(const FilterState& state, std::span<const LandmarkId> ids, const Quaternion& q_nom,
                               Eigen::Ref<MatrixXd> H);

}  // namespace aslam
