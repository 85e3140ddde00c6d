#include "aslam/observability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "aslam/error.hpp"

namespace aslam {

namespace {

VectorXd singular_values(const MatrixXd& M) {
  if (M.size() == 0) return VectorXd();
  Eigen::BDCSVD<MatrixXd> svd(M);
  return svd.singularValues();
}

int count_above(const VectorXd& sv, double tol) {
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) r += sv(i) > tol ? 1 : 0;
  return r;
}

int numerical_rank(const MatrixXd& M, double kappa) {
  const VectorXd sv = singular_values(M);
  return count_above(sv, rank_tolerance(sv, M.rows(), M.cols(), kappa));
}

Vec3 unskew(const Mat3& S) { return {S(2, 1), S(0, 2), S(1, 0)}; }

void append_block(MatrixXd& O, const MatrixXd& block, bool balance) {
  O.conservativeResize(O.rows() + block.rows(), Eigen::NoChange);
  const double f = block.norm();
  if (balance && f > 0.0) {
    O.bottomRows(block.rows()) = block / f;
  } else {
    O.bottomRows(block.rows()) = block;
  }
}

}  // namespace

void SegmentModel::validate() const {
  if (F.rows() != F.cols() || F.rows() < idx::kCore || (F.rows() - idx::kCore) % 3 != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "F must be (15+3n) square");
  }
  if (H.cols() != F.rows() || H.rows() % 3 != 0) {
    throw Error(ErrorCode::kDimensionMismatch, "H must have 3m rows and as many columns as F");
  }
}

SegmentModel segment_from_state(const FilterState& state, std::span<const LandmarkId> ids, const Vec3& omega_bar,
                                const Vec3& a_bar, double dt) {
  SegmentModel seg;
  seg.F = continuous_jacobians(state.q, omega_bar, a_bar, state.n_landmarks()).F;
  seg.H = observation_jacobian(state, ids);
  seg.dt = dt;
  return seg;
}

MatrixXd build_observability(const SegmentModel& seg, int blocks, bool balance) {
  seg.validate();
  if (blocks < 1) throw Error(ErrorCode::kInvalidInput, "observability order must be >= 1");
  MatrixXd O(0, seg.F.cols());
  MatrixXd block = seg.H;
  for (int k = 0; k < blocks; ++k) {
    append_block(O, block, balance);
    if (k + 1 < blocks) block = (block * seg.F).eval();
  }
  return O;
}

MatrixXd build_observability(const SegmentModel& seg, const RankPolicy& policy) {
  seg.validate();
  const int required = static_cast<int>(seg.F.cols());
  const int cap = required;  // 3n+15 blocks: H plus 3n+14 powers
  if (policy.exact_order) return build_observability(seg, cap, policy.balance);

  MatrixXd O(0, seg.F.cols());
  MatrixXd block = seg.H;
  int last_rank = -1;
  int stable = 0;
  for (int k = 0; k < cap; ++k) {
    append_block(O, block, policy.balance);
    const int r = numerical_rank(O, policy.kappa);
    if (r >= required) break;
    stable = (r == last_rank) ? stable + 1 : 0;
    if (stable >= 3) break;
    last_rank = r;
    block = (block * seg.F).eval();
  }
  return O;
}

PiCondition pi_condition(const Vec3& p1, const Vec3& p2, const Vec3& p3, double tol) {
  const Vec3 d1 = p1 - p3;
  const Vec3 d2 = p2 - p3;
  const double scale = std::max({1.0, p1.norm(), p2.norm(), p3.norm()});
  const double tiny = 1e-12 * scale;
  if (d1.norm() <= tiny || d2.norm() <= tiny) {
    throw Error(ErrorCode::kDegenerateGeometry, "landmark baselines must have nonzero length");
  }
  PiCondition c;
  c.e1 = d1.normalized();
  c.e2 = d2.normalized();
  const Mat3 S1 = skew(c.e1);
  const Mat3 S2 = skew(c.e2);
  c.Pi = S1 * S1 + S2 * S2;
  c.det = c.Pi.determinant();
  c.cross_norm = c.e1.cross(c.e2).norm();
  c.full_rank = c.cross_norm > tol;
  return c;
}

double rank_tolerance(const VectorXd& sv, Eigen::Index rows, Eigen::Index cols, double kappa) {
  const double smax = sv.size() > 0 ? sv.maxCoeff() : 0.0;
  return smax * static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * kappa;
}

ObservabilityReport rank_test(const MatrixXd& O, int n, double kappa) {
  if (n < 0) throw Error(ErrorCode::kInvalidInput, "landmark count must be >= 0");
  ObservabilityReport rep;
  rep.rows = static_cast<int>(O.rows());
  rep.cols = static_cast<int>(O.cols());
  rep.required = error_dim(n);
  rep.singular_values = singular_values(O);
  rep.tolerance = rank_tolerance(rep.singular_values, O.rows(), O.cols(), kappa);
  rep.rank = count_above(rep.singular_values, rep.tolerance);
  rep.observable = rep.rank == rep.required;
  return rep;
}

ObservabilityReport stripped_observability(std::span<const SegmentModel> segs, const RankPolicy& policy) {
  if (segs.empty()) throw Error(ErrorCode::kInvalidInput, "at least one segment is required");
  const Eigen::Index cols = segs.front().F.cols();
  MatrixXd stacked(0, cols);
  std::vector<int> ranks;
  std::vector<bool> inclusion;
  for (const SegmentModel& seg : segs) {
    seg.validate();
    if (seg.F.cols() != cols) throw Error(ErrorCode::kDimensionMismatch, "segments differ in state dimension");
    const MatrixXd O = build_observability(seg, policy);

    Eigen::JacobiSVD<MatrixXd> svd(O, Eigen::ComputeFullV);
    const VectorXd& sv = svd.singularValues();
    const double tol = rank_tolerance(sv, O.rows(), O.cols(), policy.kappa);
    const int r = count_above(sv, tol);
    ranks.push_back(r);
    if (r == cols) {
      inclusion.push_back(true);
    } else {
      const MatrixXd null_basis = svd.matrixV().rightCols(cols - r);
      const double fn = std::max(1.0, seg.F.norm());
      inclusion.push_back((seg.F * null_basis).norm() <= 1e-9 * fn);
    }

    const Eigen::Index r0 = stacked.rows();
    stacked.conservativeResize(r0 + O.rows(), Eigen::NoChange);
    stacked.bottomRows(O.rows()) = O;
  }
  ObservabilityReport rep = rank_test(stacked, segs.front().n(), policy.kappa);
  rep.segment_ranks = std::move(ranks);
  rep.null_space_ok = inclusion;
  rep.surrogate_valid = std::all_of(inclusion.begin(), inclusion.end(), [](bool b) { return b; });
  return rep;
}

namespace {

struct ReductionParts {
  MatrixXd reduced;
  Mat3 Pi;
  Mat3 At;
  int n = 0;
};

ReductionParts reduce(const SegmentModel& seg) {
  seg.validate();
  const int n = seg.n();
  const Eigen::Index N = seg.F.cols();
  const Eigen::Index m = seg.H.rows() / 3;
  if (m != 3 + n) {
    throw Error(ErrorCode::kReductionInapplicable, "layout must be three anchors followed by every estimated landmark");
  }
  for (int i = 0; i < 3; ++i) {
    if (n > 0 && seg.H.block(3 * i, idx::kCore, 3, 3 * n).cwiseAbs().maxCoeff() != 0.0) {
      throw Error(ErrorCode::kReductionInapplicable, "the first three rows must belong to anchors");
    }
  }

  auto row = [&seg](const MatrixXd& M, int i) { return M.middleRows(3 * i, 3); };
  const MatrixXd& H = seg.H;
  const MatrixXd HF = H * seg.F;
  const MatrixXd HF2 = HF * seg.F;

  Vec3 p[3];
  for (int i = 0; i < 3; ++i) p[i] = 0.5 * unskew(H.block<3, 3>(3 * i, idx::kAtt));

  PiCondition pc;
  try {
    pc = pi_condition(p[0], p[1], p[2]);
  } catch (const Error&) {
    throw Error(ErrorCode::kReductionInapplicable, "anchor baselines are degenerate");
  }
  if (!pc.full_rank) throw Error(ErrorCode::kReductionInapplicable, "anchors are collinear, Pi is singular");

  const double l1 = (p[0] - p[2]).norm();
  const double l2 = (p[1] - p[2]).norm();
  const Mat3 S1 = skew(pc.e1) / l1;
  const Mat3 S2 = skew(pc.e2) / l2;

  const MatrixXd R1 = S1 * (row(H, 0) - row(H, 2)) + S2 * (row(H, 1) - row(H, 2));
  const MatrixXd R3 = row(H, 0);
  const MatrixXd R5 = S1 * (row(HF, 0) - row(HF, 2)) + S2 * (row(HF, 1) - row(HF, 2));
  const MatrixXd R4 = row(HF, 0) - skew(p[0]) * pc.Pi.inverse() * R5;
  const MatrixXd R7 = row(HF2, 0);

  ReductionParts out;
  out.n = n;
  out.Pi = pc.Pi;
  out.At = -H.block<3, 3>(0, idx::kPos);
  out.reduced.resize(15 + 3 * n, N);
  out.reduced << R1, R3, R4, R5, R7, H.bottomRows(3 * n);
  return out;
}

}  // namespace

MatrixXd mro_reduced_matrix(const SegmentModel& seg) { return reduce(seg).reduced; }

bool mro_reduction_check(const SegmentModel& seg, double tol) {
  const ReductionParts parts = reduce(seg);
  const MatrixXd& Rm = parts.reduced;
  const double scale = std::max(1.0, Rm.cwiseAbs().maxCoeff());
  const double limit = tol * scale;

  const int blocks = 5 + parts.n;
  std::vector<Mat3> expected = {2.0 * parts.Pi, -parts.At, -parts.At, parts.Pi, -Mat3::Identity()};
  for (int k = 0; k < parts.n; ++k) expected.push_back(parts.At);

  for (int b = 0; b < blocks; ++b) {
    if ((Rm.block<3, 3>(3 * b, 3 * b) - expected[static_cast<std::size_t>(b)]).cwiseAbs().maxCoeff() > limit) {
      return false;
    }
    for (int c = b + 1; c < blocks; ++c) {
      if (Rm.block<3, 3>(3 * b, 3 * c).cwiseAbs().maxCoeff() > limit) return false;
    }
  }

  const int rank_o = rank_test(build_observability(seg, RankPolicy{}), parts.n).rank;
  const int rank_reduced = rank_test(Rm, parts.n).rank;
  return rank_o == rank_reduced;
}

}  // namespace aslam
