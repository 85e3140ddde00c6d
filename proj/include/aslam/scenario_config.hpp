#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "aslam/estimator.hpp"
#include "aslam/observability.hpp"
#include "aslam/simulator.hpp"

namespace aslam {

struct Thresholds {
  double position_m = 0.5;
  double attitude_rad = 2.0 * 3.14159265358979323846 / 180.0;
};

enum class AnchorInit {
  kObserved,  ///< anchors fixed at their first observation
  kSurveyed,  ///< anchors fixed at their configured positions
};

struct FilterConfig {
  int window_w = 100;
  double rank_tol_kappa = 100.0;
  Thresholds thresholds;
  double sigma_p_prior = 0.2;  ///< m
  double attitude_prior_rad = 0.0;
  double position_prior_m = 0.0;
  double bias_prior_sigma_g = 0.0;
  double bias_prior_sigma_a = 0.0;
  bool adaptive = true;
  double eigen_floor = 1e-6;
  NoiseStructure noise_structure = NoiseStructure::kBlockDiagonal;
  AnchorInit anchor_init = AnchorInit::kObserved;
  bool paper_mode = false;
};

struct ObservabilityConfig {
  double segment_s = 10.0;
  bool exact_order = false;
  bool balance = true;
};

/// Everything one run needs, parsed from a single JSON document.
struct RunConfig {
  std::string name = "scenario";
  ScenarioConfig scenario;
  FilterConfig filter;
  ObservabilityConfig observability;
  nlohmann::json source;  ///< the document as read, echoed into reports

  FilterSettings filter_settings() const;
  RankPolicy rank_policy() const;
};

/// Parses and validates a config document. Throws kSchema listing every offending key.
RunConfig parse_config(const nlohmann::json& doc);
/// Reads a config file; a missing or unreadable file throws kIo naming the path.
RunConfig load_config(const std::string& path);

/// Applies a seed override to both the parsed config and its echoed source.
void override_seed(RunConfig& config, std::uint64_t seed);
/// Selects the published closed-form discretization.
void set_paper_mode(RunConfig& config, bool on);

}  // namespace aslam
