#pragma once

#include <optional>
#include <span>
#include <vector>

#include "aslam/model.hpp"
#include "aslam/observation.hpp"

namespace aslam {

/// Linearized system over one time segment: d(dx)/dt = F dx, y = H dx.
struct SegmentModel {
  MatrixXd F;
  MatrixXd H;
  double dt = 0.0;

  /// Number of estimated landmarks implied by the state dimension.
  int n() const { return static_cast<int>((F.rows() - idx::kCore) / 3); }
  void validate() const;
};

/// F from continuous_jacobians and H from observation_jacobian at the given nominal point.
SegmentModel segment_from_state(const FilterState& state, std::span<const LandmarkId> ids, const Vec3& omega_bar,
                                const Vec3& a_bar, double dt = 0.0);

struct RankPolicy {
  double kappa = 100.0;  ///< multiplier on sigma_max * max(rows, cols) * eps
  bool balance = true;   ///< scale each H F^k block to unit Frobenius norm
  bool exact_order = false;  ///< always build all 3n+15 blocks
};

/// [H; H F; ...; H F^(blocks-1)], each block optionally Frobenius-normalized.
MatrixXd build_observability(const SegmentModel& seg, int blocks, bool balance = true);

/// Builds blocks until the rank is unchanged for 3 consecutive additions or reaches
/// 3n+15, capped at 3n+15 blocks. With policy.exact_order all 3n+15 blocks are built.
MatrixXd build_observability(const SegmentModel& seg, const RankPolicy& policy);

struct PiCondition {
  Mat3 Pi = Mat3::Zero();
  Vec3 e1 = Vec3::Zero();
  Vec3 e2 = Vec3::Zero();
  double det = 0.0;
  double cross_norm = 0.0;  ///< |e1 x e2|
  bool full_rank = false;
};

/// Baselines e_i = (p_i - p3)/|p_i - p3| and Pi = [e1 x]^2 + [e2 x]^2.
/// Throws kDegenerateGeometry when p1 or p2 coincides with p3.
PiCondition pi_condition(const Vec3& p1, const Vec3& p2, const Vec3& p3, double tol = 1e-8);

struct ObservabilityReport {
  int rank = 0;
  int required = 0;
  int rows = 0;
  int cols = 0;
  double tolerance = 0.0;
  VectorXd singular_values;
  bool observable = false;
  std::optional<PiCondition> pi;

  // Filled by stripped_observability only.
  std::vector<int> segment_ranks;
  std::vector<bool> null_space_ok;  ///< null(O_j) within null(F_j), per segment
  bool surrogate_valid = false;     ///< every segment satisfies the inclusion
};

double rank_tolerance(const VectorXd& singular_values, Eigen::Index rows, Eigen::Index cols, double kappa);

/// Numerical rank of O against the required 3n+15.
ObservabilityReport rank_test(const MatrixXd& O, int n, double kappa = 100.0);

/// Stacks the per-segment matrices and checks the null-space inclusion for each one.
ObservabilityReport stripped_observability(std::span<const SegmentModel> segs, const RankPolicy& policy = {});

/// Runs the elementary row operations that bring O into block lower-triangular form for
/// three anchors (rows 0..2 of H) followed by the estimated landmarks in state order.
/// Returns true iff the diagonal blocks are {2 Pi, -A^T, -A^T, Pi, -I, A^T, ...}, the
/// strict upper block triangle vanishes and the rank is preserved, all within tol.
/// Throws kReductionInapplicable when Pi is singular or the layout does not fit.
bool mro_reduction_check(const SegmentModel& seg, double tol = 1e-9);

/// Reduced matrix produced by the row operations (exposed for inspection).
MatrixXd mro_reduced_matrix(const SegmentModel& seg);

}  // namespace aslam
