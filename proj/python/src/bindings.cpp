#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "aslam/error.hpp"
#include "aslam/observability.hpp"
#include "aslam/rotation.hpp"
#include "aslam/runner.hpp"

namespace py = pybind11;

namespace {

// Quaternions cross the boundary as [x, y, z, w].
aslam::Quaternion to_quat(const Eigen::Vector4d& q) { return {q.x(), q.y(), q.z(), q.w()}; }

Eigen::Vector4d from_quat(const aslam::Quaternion& q) {
  return {q.vec().x(), q.vec().y(), q.vec().z(), q.scalar()};
}

aslam::RunConfig load(const std::string& path, std::optional<std::uint64_t> seed, bool paper_mode) {
  aslam::RunConfig cfg = aslam::load_config(path);
  if (seed) aslam::override_seed(cfg, *seed);
  if (paper_mode) aslam::set_paper_mode(cfg, true);
  return cfg;
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

aslam::DiscretizationMode mode_of(bool paper_mode) {
  return paper_mode ? aslam::DiscretizationMode::kPaper : aslam::DiscretizationMode::kExact;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adaptive IMU/landmark SLAM core";

  py::register_exception<aslam::Error>(m, "AslamError", PyExc_RuntimeError);

  m.def("quat_product", [](const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
    return from_quat(aslam::quat_product(to_quat(a), to_quat(b)));
  }, py::arg("q1"), py::arg("q2"));
  m.def("rotation_matrix", [](const Eigen::Vector4d& q) { return aslam::rotation_matrix(to_quat(q)); },
        py::arg("q"));
  m.def("quat_from_matrix", [](const aslam::Mat3& A) { return from_quat(aslam::quat_from_matrix(A)); },
        py::arg("A"));
  m.def("quat_propagate", [](const Eigen::Vector4d& q, const aslam::Vec3& omega, double dt) {
    return from_quat(aslam::quat_propagate(to_quat(q), omega, dt));
  }, py::arg("q"), py::arg("omega"), py::arg("dt"));
  m.def("error_quat", [](const Eigen::Vector4d& q, const Eigen::Vector4d& q_nom) {
    return from_quat(aslam::error_quat(to_quat(q), to_quat(q_nom)));
  }, py::arg("q"), py::arg("q_nom"));
  m.def("orientation_error", [](const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
    return aslam::orientation_error(to_quat(a), to_quat(b));
  }, py::arg("q_hat"), py::arg("q_ref"));

  m.def("state_transition",
        [](const aslam::Vec3& omega, const aslam::Vec3& accel, const aslam::Mat3& A, double dt, int n,
           bool paper_mode) {
          return aslam::state_transition(omega, accel, A, dt, n, mode_of(paper_mode));
        },
        py::arg("omega"), py::arg("accel"), py::arg("A"), py::arg("dt"), py::arg("n") = 0,
        py::arg("paper_mode") = false);
  m.def("process_noise",
        [](const aslam::Vec3& omega, const aslam::Vec3& accel, const aslam::Mat3& A, double dt, double sigma_g,
           double sigma_bg, double sigma_a, double sigma_ba, int n, bool paper_mode) {
          aslam::NoiseSpec noise{sigma_g, sigma_bg, sigma_a, sigma_ba};
          return aslam::process_noise(omega, accel, A, dt, noise, n, mode_of(paper_mode));
        },
        py::arg("omega"), py::arg("accel"), py::arg("A"), py::arg("dt"), py::arg("sigma_g"), py::arg("sigma_bg"),
        py::arg("sigma_a"), py::arg("sigma_ba"), py::arg("n") = 0, py::arg("paper_mode") = false);

  m.def("pi_condition", [](const aslam::Vec3& p1, const aslam::Vec3& p2, const aslam::Vec3& p3) {
    const aslam::PiCondition pc = aslam::pi_condition(p1, p2, p3);
    py::dict d;
    d["Pi"] = pc.Pi;
    d["det"] = pc.det;
    d["cross_norm"] = pc.cross_norm;
    d["full_rank"] = pc.full_rank;
    return d;
  }, py::arg("p1"), py::arg("p2"), py::arg("p3"));
  m.def("rank_test", [](const aslam::MatrixXd& O, int n, double kappa) {
    const aslam::ObservabilityReport r = aslam::rank_test(O, n, kappa);
    py::dict d;
    d["rank"] = r.rank;
    d["required"] = r.required;
    d["tolerance"] = r.tolerance;
    d["singular_values"] = r.singular_values;
    d["observable"] = r.observable;
    return d;
  }, py::arg("O"), py::arg("n"), py::arg("kappa") = 100.0);

  m.def("run",
        [](const std::string& config, std::optional<std::uint64_t> seed, bool paper_mode,
           std::optional<std::string> out) {
          const aslam::RunConfig cfg = load(config, seed, paper_mode);
          aslam::RunResult result;
          nlohmann::json summary;
          {
            py::gil_scoped_release release;
            result = aslam::run_scenario(cfg);
            summary = aslam::observability_summary(aslam::analyze_observability(cfg));
            if (out) aslam::write_run_outputs(cfg, result, summary, *out);
          }
          return to_python(aslam::report_json(cfg, result, summary));
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("paper_mode") = false, py::arg("out") = py::none(),
        "Simulate and filter a scenario; returns the report as a dict.");
  m.def("observability",
        [](const std::string& config, std::optional<std::uint64_t> seed) {
          const aslam::RunConfig cfg = load(config, seed, false);
          nlohmann::json analysis;
          {
            py::gil_scoped_release release;
            analysis = aslam::analyze_observability(cfg);
          }
          return to_python(analysis);
        },
        py::arg("config"), py::arg("seed") = py::none());
  m.def("compare", [](const std::vector<std::string>& reports) {
    const aslam::Comparison c = aslam::compare_reports(reports);
    return py::make_tuple(c.csv, c.verdicts);
  }, py::arg("reports"));
}
