#include "aslam/observation.hpp"

#include <string>

#include "aslam/error.hpp"

namespace aslam {

void LandmarkObservation::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].z.allFinite()) {
      throw Error(ErrorCode::kInvalidInput, "landmark " + std::to_string(entries[i].id) + " has a non-finite position");
    }
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      if (entries[i].id == entries[j].id) {
        throw Error(ErrorCode::kDuplicateLandmark, "id " + std::to_string(entries[i].id) + " repeated in one epoch");
      }
    }
  }
}

std::vector<LandmarkId> LandmarkObservation::ids() const {
  std::vector<LandmarkId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

const LandmarkMeasurement* LandmarkObservation::find(LandmarkId id) const {
  for (const auto& e : entries) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

VectorXd LandmarkObservation::stacked(std::span<const LandmarkId> ids) const {
  VectorXd z(3 * static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const LandmarkMeasurement* m = find(ids[i]);
    if (m == nullptr) throw Error(ErrorCode::kMissingLandmark, "id " + std::to_string(ids[i]) + " not observed");
    z.segment<3>(3 * static_cast<Eigen::Index>(i)) = m->z;
  }
  return z;
}

Vec3 landmark_position(const FilterState& state, LandmarkId id) {
  if (const int a = state.anchor_slot(id); a >= 0) return state.anchors[static_cast<std::size_t>(a)].position;
  if (const int k = state.landmark_slot(id); k >= 0) return state.landmarks[static_cast<std::size_t>(k)].position;
  throw Error(ErrorCode::kMissingLandmark, "id " + std::to_string(id) + " is neither an anchor nor estimated");
}

VectorXd predict_observations(const FilterState& state, std::span<const LandmarkId> ids) {
  const Mat3 At = rotation_matrix(state.q).transpose();
  VectorXd h(3 * static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    h.segment<3>(3 * static_cast<Eigen::Index>(i)) = At * (landmark_position(state, ids[i]) - state.r);
  }
  return h;
}

void observation_jacobian_into(const FilterState& state, std::span<const LandmarkId> ids, const Quaternion& q_nom,
                               Eigen::Ref<MatrixXd> H) {
  const auto rows = 3 * static_cast<Eigen::Index>(ids.size());
  if (H.rows() != rows || H.cols() != state.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "observation Jacobian buffer has the wrong shape");
  }
  const Mat3 At = rotation_matrix(q_nom).transpose();
  H.setZero();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = 3 * static_cast<Eigen::Index>(i);
    const Vec3 p_hat = At * (landmark_position(state, ids[i]) - state.r);
    H.block<3, 3>(row, idx::kAtt) = 2.0 * skew(p_hat);
    H.block<3, 3>(row, idx::kPos) = -At;
    if (const int k = state.landmark_slot(ids[i]); k >= 0) H.block<3, 3>(row, idx::landmark(k)) = At;
  }
}

MatrixXd observation_jacobian(const FilterState& state, std::span<const LandmarkId> ids, const Quaternion& q_nom) {
  MatrixXd H(3 * static_cast<Eigen::Index>(ids.size()), state.dim());
  observation_jacobian_into(state, ids, q_nom, H);
  return H;
}

MatrixXd observation_jacobian(const FilterState& state, std::span<const LandmarkId> ids) {
  return observation_jacobian(state, ids, state.q);
}

}  // namespace aslam
