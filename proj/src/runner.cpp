#include "aslam/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "aslam/error.hpp"

namespace aslam {

namespace {

using nlohmann::json;

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json to_json(const Quaternion& q) { return json::array({q.vec().x(), q.vec().y(), q.vec().z(), q.scalar()}); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Truth pose in the navigation frame, i.e. relative to the first truth sample.
struct NavFrame {
  Quaternion q0_conj;
  Mat3 A0t;
  Vec3 r0;

  explicit NavFrame(const TruthSample& first)
      : q0_conj(first.q.conjugate()), A0t(rotation_matrix(first.q).transpose()), r0(first.r) {}

  Quaternion attitude(const Quaternion& q) const { return quat_product(q0_conj, q); }
  Vec3 position(const Vec3& r) const { return A0t * (r - r0); }
  Vec3 direction(const Vec3& v) const { return A0t * v; }
};

void write_row(std::ostream& out, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) out << ',';
    out << format_double(v);
    first = false;
  }
  out << '\n';
}

std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

RunResult run_filter(const RunConfig& config, const SensorStreams& streams, const RunOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  if (streams.observations.size() < 2) throw Error(ErrorCode::kInvalidInput, "scenario produced fewer than 2 epochs");
  const NavFrame nav(streams.truth.front());

  FilterSettings settings = config.filter_settings();
  settings.constants.gravity = nav.direction(config.scenario.gravity);
  AdaptiveSlamFilter filter(settings);
  const std::vector<LandmarkId> anchors = config.scenario.anchor_ids();
  filter.initialize(streams.observations.front(), anchors);
  if (config.filter.anchor_init == AnchorInit::kSurveyed) {
    std::vector<Landmark> surveyed;
    for (const auto& l : config.scenario.landmarks) {
      if (l.anchor) surveyed.push_back({l.id, nav.position(l.position)});
    }
    filter.set_anchor_positions(surveyed);
  }

  std::map<LandmarkId, double> sigma_of;
  for (std::size_t i = 0; i < config.scenario.landmarks.size(); ++i) {
    sigma_of[config.scenario.landmarks[i].id] = streams.sigma_p[i];
  }

  RunResult result;
  result.sigma_p = streams.sigma_p;
  RunMetrics& m = result.metrics;
  m.min_p_eigenvalue = std::numeric_limits<double>::infinity();
  double sq_sum = 0.0;
  int count = 0;
  EpochRecord rec;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig;

  const std::span<const ImuSample> imu(streams.imu);
  for (std::size_t j = 1; j < streams.observations.size(); ++j) {
    const std::size_t a = streams.obs_imu_index[j - 1];
    const std::size_t b = streams.obs_imu_index[j];
    const TruthSample& truth = streams.truth[b];
    const Quaternion q_ref = nav.attitude(truth.q);

    const double r_trace_before = filter.has_adapted_noise() ? filter.noise_estimate().trace() : -1.0;
    const StepDiagnostics& d = filter.step(imu.subspan(a, b - a + 1), &streams.observations[j], &q_ref);
    const FilterState& s = filter.state();

    rec.t = d.t;
    rec.q_true = q_ref;
    rec.r_true = nav.position(truth.r);
    rec.v_true = nav.direction(truth.v);
    rec.q_est = s.q;
    rec.r_est = s.r;
    rec.v_est = s.v;
    rec.bg_est = s.bg;
    rec.ba_est = s.ba;
    rec.bg_true = streams.true_bias_g[b];
    rec.ba_true = streams.true_bias_a[b];
    rec.position_error = (s.r - rec.r_true).norm();
    rec.orientation_error = d.orientation_error.value_or(0.0);
    rec.trace_p = filter.covariance().trace();
    rec.state_dim = d.state_dim;
    rec.adapted_r = d.adapted_noise_in_use;
    rec.r_trace = d.adapted_noise_in_use ? r_trace_before
                                         : settings.sigma_p_prior * settings.sigma_p_prior * 3.0 * d.n_updated;

    sq_sum += rec.position_error * rec.position_error;
    ++count;
    m.max_quat_norm_deviation = std::max(m.max_quat_norm_deviation, d.quat_norm_deviation);
    m.max_p_asymmetry = std::max(m.max_p_asymmetry, d.p_asymmetry);
    m.large_corrections += d.large_correction ? 1 : 0;
    if (options.check_eigenvalues) {
      eig.compute(filter.covariance(), Eigen::EigenvaluesOnly);
      m.min_p_eigenvalue = std::min(m.min_p_eigenvalue, eig.eigenvalues().minCoeff());
    }
    if (options.keep_records || j + 1 == streams.observations.size()) result.records.push_back(rec);
  }

  const EpochRecord& last = result.records.back();
  m.epochs = count;
  m.rmse_position = std::sqrt(sq_sum / std::max(count, 1));
  m.final_position_error = last.position_error;
  m.final_orientation_error = last.orientation_error;
  m.bias_g_final = last.bg_est;
  m.bias_a_final = last.ba_est;
  m.bias_g_true = last.bg_true;
  m.bias_a_true = last.ba_true;
  m.bias_g_error = last.bg_est - last.bg_true;
  m.bias_a_error = last.ba_est - last.ba_true;
  m.converged = std::isfinite(m.final_position_error) && std::isfinite(m.final_orientation_error) &&
                m.final_position_error <= config.filter.thresholds.position_m &&
                m.final_orientation_error <= config.filter.thresholds.attitude_rad;

  m.adapted_noise = filter.has_adapted_noise();
  if (m.adapted_noise) {
    const auto& layout = filter.residual_window().layout();
    MatrixXd R_true = MatrixXd::Zero(3 * static_cast<Eigen::Index>(layout.size()), 3 * static_cast<Eigen::Index>(layout.size()));
    for (std::size_t i = 0; i < layout.size(); ++i) {
      const double s = sigma_of.at(layout[i]);
      R_true.block<3, 3>(3 * static_cast<Eigen::Index>(i), 3 * static_cast<Eigen::Index>(i)).diagonal().setConstant(s * s);
    }
    m.adapted_r_rel_error = (filter.noise_estimate() - R_true).norm() / R_true.norm();
  }

  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

RunResult run_scenario(const RunConfig& config, const RunOptions& options) {
  const SensorStreams streams = simulate(config.scenario);
  return run_filter(config, streams, options);
}

json report_json(const RunConfig& config, const RunResult& result, const json& observability) {
  const RunMetrics& m = result.metrics;
  json j;
  j["schema_version"] = 1;
  j["generated_at"] = utc_timestamp();
  j["name"] = config.name;
  j["seed"] = config.scenario.seed;
  j["paper_mode"] = config.filter.paper_mode;
  j["config"] = config.source;
  j["thresholds"] = {{"position_m", config.filter.thresholds.position_m},
                     {"attitude_rad", config.filter.thresholds.attitude_rad},
                     {"artifact_defined", true}};
  j["metrics"] = {{"epochs", m.epochs},
                  {"rmse_position_m", m.rmse_position},
                  {"final_position_error_m", m.final_position_error},
                  {"final_orientation_error_rad", m.final_orientation_error},
                  {"bias_g_estimate", to_json(m.bias_g_final)},
                  {"bias_a_estimate", to_json(m.bias_a_final)},
                  {"bias_g_true", to_json(m.bias_g_true)},
                  {"bias_a_true", to_json(m.bias_a_true)},
                  {"bias_g_error", to_json(m.bias_g_error)},
                  {"bias_a_error", to_json(m.bias_a_error)},
                  {"converged", m.converged}};
  j["hygiene"] = {{"max_quat_norm_deviation", m.max_quat_norm_deviation},
                  {"max_p_asymmetry", m.max_p_asymmetry},
                  {"min_p_eigenvalue", m.min_p_eigenvalue},
                  {"large_corrections", m.large_corrections}};
  j["adaptive_noise"] = {{"adapted", m.adapted_noise},
                         {"relative_error", m.adapted_r_rel_error},
                         {"sigma_p", result.sigma_p}};
  j["observability"] = observability;
  json epochs = json::array();
  for (const EpochRecord& r : result.records) {
    epochs.push_back({{"t", r.t},
                      {"q_true", to_json(r.q_true)},
                      {"r_true", to_json(r.r_true)},
                      {"q_est", to_json(r.q_est)},
                      {"r_est", to_json(r.r_est)},
                      {"position_error_m", r.position_error},
                      {"orientation_error_rad", r.orientation_error},
                      {"trace_p", r.trace_p},
                      {"adapted_r", {{"in_use", r.adapted_r}, {"trace", r.r_trace}}}});
  }
  j["epochs"] = std::move(epochs);
  return j;
}

void write_run_outputs(const RunConfig& config, const RunResult& result, const json& observability,
                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory '" + out_dir + "': " + ec.message());
  const fs::path dir(out_dir);

  {
    auto out = open_output(dir / "truth.csv");
    out << "t,qx,qy,qz,qw,rx,ry,rz,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz\n";
    for (const EpochRecord& r : result.records) {
      const Vec4 q = r.q_true.coeffs();
      write_row(out, {r.t, q(0), q(1), q(2), q(3), r.r_true.x(), r.r_true.y(), r.r_true.z(), r.v_true.x(),
                      r.v_true.y(), r.v_true.z(), r.bg_true.x(), r.bg_true.y(), r.bg_true.z(), r.ba_true.x(),
                      r.ba_true.y(), r.ba_true.z()});
    }
  }
  {
    auto out = open_output(dir / "estimate.csv");
    out << "t,qx,qy,qz,qw,rx,ry,rz,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz,trace_p,state_dim\n";
    for (const EpochRecord& r : result.records) {
      const Vec4 q = r.q_est.coeffs();
      write_row(out, {r.t, q(0), q(1), q(2), q(3), r.r_est.x(), r.r_est.y(), r.r_est.z(), r.v_est.x(), r.v_est.y(),
                      r.v_est.z(), r.bg_est.x(), r.bg_est.y(), r.bg_est.z(), r.ba_est.x(), r.ba_est.y(),
                      r.ba_est.z(), r.trace_p, static_cast<double>(r.state_dim)});
    }
  }
  {
    auto out = open_output(dir / "errors.csv");
    out << "t,position_error_m,orientation_error_rad,bg_err_x,bg_err_y,bg_err_z,ba_err_x,ba_err_y,ba_err_z,"
           "trace_p,r_trace,adapted_r\n";
    for (const EpochRecord& r : result.records) {
      const Vec3 eg = r.bg_est - r.bg_true;
      const Vec3 ea = r.ba_est - r.ba_true;
      write_row(out, {r.t, r.position_error, r.orientation_error, eg.x(), eg.y(), eg.z(), ea.x(), ea.y(), ea.z(),
                      r.trace_p, r.r_trace, r.adapted_r ? 1.0 : 0.0});
    }
  }
  {
    auto out = open_output(dir / "report.json");
    out << report_json(config, result, observability).dump(2) << '\n';
  }
}

json analyze_observability(const RunConfig& config) {
  const ScenarioConfig& sc = config.scenario;
  sc.validate();
  const Trajectory trajectory(sc.trajectory);
  const NavFrame nav(trajectory.at(0.0));
  const Vec3 g_nav = nav.direction(sc.gravity);
  const RankPolicy policy = config.rank_policy();

  std::vector<LandmarkId> ids;
  FilterState base;
  for (const auto& l : sc.landmarks) {
    if (l.anchor) {
      base.anchors.push_back({l.id, nav.position(l.position)});
      ids.push_back(l.id);
    }
  }
  for (const auto& l : sc.landmarks) {
    if (!l.anchor) {
      base.landmarks.push_back({l.id, nav.position(l.position)});
      ids.push_back(l.id);
    }
  }
  std::vector<LandmarkId> anchor_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(base.anchors.size()));
  const int n = base.n_landmarks();

  json segments = json::array();
  std::vector<SegmentModel> models;
  const double step = config.observability.segment_s;
  const auto count = static_cast<int>(std::floor(sc.duration / step + 1e-9));
  bool all_observable = true;
  bool prop1_all = true;
  for (int k = 0; k < std::max(count, 1); ++k) {
    const double t = k * step;
    const TruthSample s = trajectory.at(t);
    FilterState nominal = base;
    nominal.q = nav.attitude(s.q);
    nominal.r = nav.position(s.r);
    nominal.v = nav.direction(s.v);
    const Mat3 A = rotation_matrix(nominal.q);
    const Vec3 a_bar = A.transpose() * (nav.direction(s.accel_inertial) + g_nav);

    const SegmentModel seg = segment_from_state(nominal, ids, s.omega, a_bar, step);
    const ObservabilityReport rep = rank_test(build_observability(seg, policy), n, policy.kappa);

    FilterState anchors_only = nominal;
    anchors_only.landmarks.clear();
    const SegmentModel seg0 = segment_from_state(anchors_only, anchor_ids, s.omega, a_bar, step);
    const ObservabilityReport rep0 = rank_test(build_observability(seg0, policy), 0, policy.kappa);

    json entry = {{"index", k},
                  {"t", t},
                  {"rank", rep.rank},
                  {"required", rep.required},
                  {"observable", rep.observable},
                  {"tolerance", rep.tolerance},
                  {"singular_values", std::vector<double>(rep.singular_values.data(),
                                                          rep.singular_values.data() + rep.singular_values.size())},
                  {"anchor_only_rank", rep0.rank},
                  {"anchor_only_required", rep0.required}};
    all_observable = all_observable && rep.observable;
    if (nominal.anchors.size() >= 3) {
      Vec3 p[3];
      for (int i = 0; i < 3; ++i) p[i] = A.transpose() * (nominal.anchors[static_cast<std::size_t>(i)].position - nominal.r);
      try {
        const PiCondition pc = pi_condition(p[0], p[1], p[2]);
        entry["pi"] = {{"det", pc.det}, {"cross_norm", pc.cross_norm}, {"full_rank", pc.full_rank}};
        entry["proposition1_observable"] = pc.full_rank;
        prop1_all = prop1_all && pc.full_rank;
      } catch (const Error&) {
        entry["pi"] = nullptr;
        entry["proposition1_observable"] = false;
        prop1_all = false;
      }
    } else {
      entry["pi"] = nullptr;
      entry["proposition1_observable"] = false;
      prop1_all = false;
    }
    if (nominal.anchors.size() == 3) {
      try {
        entry["reduction_check"] = mro_reduction_check(seg) ? "pass" : "fail";
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kReductionInapplicable) throw;
        entry["reduction_check"] = "inapplicable";
      }
    } else {
      entry["reduction_check"] = "inapplicable";
    }
    segments.push_back(std::move(entry));
    models.push_back(seg);
  }

  const ObservabilityReport stripped = stripped_observability(models, policy);
  json out;
  out["name"] = config.name;
  out["rank_tol_kappa"] = policy.kappa;
  out["segment_s"] = step;
  out["anchors"] = static_cast<int>(base.anchors.size());
  out["estimated_landmarks"] = n;
  out["required"] = error_dim(n);
  out["segments"] = std::move(segments);
  out["all_segments_observable"] = all_observable;
  out["proposition1_all"] = prop1_all;
  std::vector<bool> null_ok(stripped.null_space_ok.begin(), stripped.null_space_ok.end());
  out["stripped"] = {{"rank", stripped.rank},
                     {"required", stripped.required},
                     {"observable", stripped.observable},
                     {"null_space_inclusion", null_ok},
                     {"surrogate_valid", stripped.surrogate_valid}};
  return out;
}

json observability_summary(const json& analysis) {
  int min_rank = std::numeric_limits<int>::max();
  int min_anchor_rank = std::numeric_limits<int>::max();
  int observable = 0;
  for (const auto& s : analysis.at("segments")) {
    min_rank = std::min(min_rank, s.at("rank").get<int>());
    min_anchor_rank = std::min(min_anchor_rank, s.at("anchor_only_rank").get<int>());
    observable += s.at("observable").get<bool>() ? 1 : 0;
  }
  return {{"segments", analysis.at("segments").size()},
          {"observable_segments", observable},
          {"required", analysis.at("required")},
          {"min_rank", min_rank},
          {"min_anchor_only_rank", min_anchor_rank},
          {"all_segments_observable", analysis.at("all_segments_observable")},
          {"proposition1_all", analysis.at("proposition1_all")},
          {"stripped_rank", analysis.at("stripped").at("rank")}};
}

Comparison compare_reports(const std::vector<std::string>& paths) {
  if (paths.size() < 2) throw Error(ErrorCode::kInvalidInput, "compare needs at least two reports");
  struct Row {
    std::string path, name;
    std::uint64_t seed = 0;
    bool paper_mode = false, converged = false;
    double final_pos = 0, final_att = 0, rmse = 0, bg_err = 0, ba_err = 0;
  };
  auto norm3 = [](const json& a) {
    return std::sqrt(a.at(0).get<double>() * a.at(0).get<double>() + a.at(1).get<double>() * a.at(1).get<double>() +
                     a.at(2).get<double>() * a.at(2).get<double>());
  };
  auto number = [](const json& v) {
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  std::vector<Row> rows;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::kIo, "cannot read report '" + p + "'");
    json r;
    try {
      r = json::parse(in);
      Row row;
      row.path = p;
      row.name = r.at("name").get<std::string>();
      row.seed = r.at("seed").get<std::uint64_t>();
      row.paper_mode = r.at("paper_mode").get<bool>();
      const json& m = r.at("metrics");
      row.converged = m.at("converged").get<bool>();
      row.final_pos = number(m.at("final_position_error_m"));
      row.final_att = number(m.at("final_orientation_error_rad"));
      row.rmse = number(m.at("rmse_position_m"));
      row.bg_err = norm3(m.at("bias_g_error"));
      row.ba_err = norm3(m.at("bias_a_error"));
      rows.push_back(row);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchema, "report '" + p + "' is malformed: " + e.what());
    }
  }

  std::ostringstream csv;
  csv << "report,name,seed,paper_mode,converged,final_position_error_m,final_orientation_error_rad,rmse_position_m,"
         "bias_g_error_norm,bias_a_error_norm,delta_final_position_error_m,delta_final_orientation_error_rad,"
         "delta_rmse_position_m\n";
  const Row& ref = rows.front();
  Comparison out;
  for (const Row& r : rows) {
    csv << r.path << ',' << r.name << ',' << r.seed << ',' << (r.paper_mode ? 1 : 0) << ',' << (r.converged ? 1 : 0)
        << ',' << format_double(r.final_pos) << ',' << format_double(r.final_att) << ',' << format_double(r.rmse)
        << ',' << format_double(r.bg_err) << ',' << format_double(r.ba_err) << ','
        << format_double(r.final_pos - ref.final_pos) << ',' << format_double(r.final_att - ref.final_att) << ','
        << format_double(r.rmse - ref.rmse) << '\n';
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const Row& r = rows[i];
    std::ostringstream v;
    const char* rel = r.final_pos < ref.final_pos ? "smaller than" : (r.final_pos > ref.final_pos ? "larger than" : "equal to");
    v << r.name << " (" << r.path << "): final position error " << format_double(r.final_pos) << " m, " << rel << ' '
      << ref.name << " (" << format_double(ref.final_pos) << " m)";
    if (ref.final_pos > 0.0) v << ", ratio " << format_double(r.final_pos / ref.final_pos);
    v << "; converged " << (r.converged ? "yes" : "no") << " vs " << (ref.converged ? "yes" : "no");
    out.verdicts.push_back(v.str());
  }
  const auto best = std::min_element(rows.begin(), rows.end(),
                                     [](const Row& a, const Row& b) { return a.final_pos < b.final_pos; });
  out.verdicts.push_back("lowest final position error: " + best->name + " (" + best->path + ")");
  out.csv = csv.str();
  return out;
}

}  // namespace aslam
