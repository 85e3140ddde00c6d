#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "aslam/scenario_config.hpp"

namespace aslam {

/// One filter epoch, with truth expressed in the navigation frame (the body frame at start-up).
struct EpochRecord {
  double t = 0.0;
  Quaternion q_true;
  Vec3 r_true = Vec3::Zero();
  Vec3 v_true = Vec3::Zero();
  Quaternion q_est;
  Vec3 r_est = Vec3::Zero();
  Vec3 v_est = Vec3::Zero();
  Vec3 bg_est = Vec3::Zero();
  Vec3 ba_est = Vec3::Zero();
  Vec3 bg_true = Vec3::Zero();
  Vec3 ba_true = Vec3::Zero();
  double position_error = 0.0;     ///< m
  double orientation_error = 0.0;  ///< rad
  double trace_p = 0.0;
  int state_dim = 0;
  bool adapted_r = false;
  double r_trace = 0.0;  ///< trace of the measurement covariance used at this epoch
};

struct RunMetrics {
  double rmse_position = 0.0;
  double final_position_error = 0.0;
  double final_orientation_error = 0.0;
  Vec3 bias_g_error = Vec3::Zero();  ///< estimate minus truth at the end
  Vec3 bias_a_error = Vec3::Zero();
  Vec3 bias_g_final = Vec3::Zero();
  Vec3 bias_a_final = Vec3::Zero();
  Vec3 bias_g_true = Vec3::Zero();
  Vec3 bias_a_true = Vec3::Zero();
  bool converged = false;

  double max_quat_norm_deviation = 0.0;
  double max_p_asymmetry = 0.0;
  double min_p_eigenvalue = 0.0;
  int large_corrections = 0;

  bool adapted_noise = false;
  double adapted_r_rel_error = -1.0;  ///< |R_hat - R|_F / |R|_F at the end, -1 when not adapted
  int epochs = 0;
  double wall_seconds = 0.0;
};

struct RunResult {
  std::vector<EpochRecord> records;
  RunMetrics metrics;
  std::vector<double> sigma_p;
};

struct RunOptions {
  bool keep_records = true;
  bool check_eigenvalues = true;  ///< track min eig(P) each epoch
};

/// Simulates the scenario and runs the filter over it.
RunResult run_scenario(const RunConfig& config, const RunOptions& options = {});
/// Runs the filter over pre-generated streams.
RunResult run_filter(const RunConfig& config, const SensorStreams& streams, const RunOptions& options = {});

nlohmann::json report_json(const RunConfig& config, const RunResult& result, const nlohmann::json& observability);
/// Writes truth.csv, estimate.csv, errors.csv and report.json into out_dir (created if needed).
void write_run_outputs(const RunConfig& config, const RunResult& result, const nlohmann::json& observability,
                       const std::string& out_dir);

/// Observability of the linearized system along the scenario's nominal trajectory, one
/// segment every observability.segment_s seconds.
nlohmann::json analyze_observability(const RunConfig& config);
/// Short form of analyze_observability for embedding in report.json.
nlohmann::json observability_summary(const nlohmann::json& analysis);

struct Comparison {
  std::string csv;
  std::vector<std::string> verdicts;
};

/// Aligned metric table over two or more report.json files, deltas relative to the first.
Comparison compare_reports(const std::vector<std::string>& paths);

/// %.17g formatting used by every CSV writer.
std::string format_double(double x);

}  // namespace aslam
