#include "aslam/scenario_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "aslam/error.hpp"

namespace aslam {

namespace {

using nlohmann::json;

// Collects every problem before failing so a single run reports all offending keys.
class Checker {
 public:
  void fail(const std::string& key, const std::string& why) { problems_.push_back(key + ": " + why); }

  void allow_only(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items()) {
      if (allowed.count(k) == 0) fail(join(where, k), "unknown key");
    }
  }

  const json* object(const json& parent, const std::string& where, const char* key, bool required) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(where, key), "required");
      return nullptr;
    }
    if (!it->is_object()) {
      fail(join(where, key), "expected an object");
      return nullptr;
    }
    return &*it;
  }

  template <typename T>
  void number(const json& parent, const std::string& where, const char* key, T& out, bool required = false) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(where, key), "required");
      return;
    }
    if (!it->is_number()) {
      fail(join(where, key), "expected a number");
      return;
    }
    if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) {
        fail(join(where, key), "expected an integer");
        return;
      }
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) {
          fail(join(where, key), "expected a non-negative integer");
          return;
        }
      }
    }
    out = it->get<T>();
  }

  void boolean(const json& parent, const std::string& where, const char* key, bool& out) {
    const auto it = parent.find(key);
    if (it == parent.end()) return;
    if (!it->is_boolean()) {
      fail(join(where, key), "expected true or false");
      return;
    }
    out = it->get<bool>();
  }

  void vec3(const json& parent, const std::string& where, const char* key, Vec3& out, bool required = false) {
    const auto it = parent.find(key);
    if (it == parent.end()) {
      if (required) fail(join(where, key), "required");
      return;
    }
    if (!as_vec3(*it, out)) fail(join(where, key), "expected an array of 3 numbers");
  }

  static bool as_vec3(const json& j, Vec3& out) {
    if (!j.is_array() || j.size() != 3) return false;
    for (int i = 0; i < 3; ++i) {
      if (!j[static_cast<std::size_t>(i)].is_number()) return false;
      out(i) = j[static_cast<std::size_t>(i)].get<double>();
    }
    return true;
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }

  void finish() const {
    if (problems_.empty()) return;
    std::ostringstream msg;
    msg << "invalid config (" << problems_.size() << " problem" << (problems_.size() == 1 ? "" : "s") << ")";
    for (const auto& p : problems_) msg << "\n  " << p;
    throw Error(ErrorCode::kSchema, msg.str());
  }

 private:
  std::vector<std::string> problems_;
};

void parse_trajectory(Checker& c, const json& t, TrajectorySpec& spec) {
  c.allow_only(t, "trajectory",
               {"type", "via_points", "durations_s", "leg_duration_s", "bank_gain", "origin", "radius", "angular_rate"});
  std::string type = "spline";
  if (const auto it = t.find("type"); it != t.end()) {
    if (!it->is_string()) {
      c.fail("trajectory.type", "expected a string");
    } else {
      type = it->get<std::string>();
    }
  }
  if (type == "spline") {
    spec.kind = TrajectoryKind::kSpline;
  } else if (type == "hover") {
    spec.kind = TrajectoryKind::kHover;
  } else if (type == "circle") {
    spec.kind = TrajectoryKind::kCircle;
  } else {
    c.fail("trajectory.type", "must be one of spline, hover, circle");
  }

  if (const auto it = t.find("via_points"); it != t.end()) {
    if (!it->is_array()) {
      c.fail("trajectory.via_points", "expected an array of points");
    } else {
      for (std::size_t i = 0; i < it->size(); ++i) {
        Vec3 p;
        if (!Checker::as_vec3((*it)[i], p)) {
          c.fail("trajectory.via_points[" + std::to_string(i) + "]", "expected an array of 3 numbers");
        } else {
          spec.via_points.push_back(p);
        }
      }
    }
  }
  if (const auto it = t.find("durations_s"); it != t.end()) {
    if (!it->is_array()) {
      c.fail("trajectory.durations_s", "expected an array of numbers");
    } else {
      for (std::size_t i = 0; i < it->size(); ++i) {
        if (!(*it)[i].is_number()) {
          c.fail("trajectory.durations_s[" + std::to_string(i) + "]", "expected a number");
        } else {
          spec.durations.push_back((*it)[i].get<double>());
        }
      }
    }
  }
  double leg = 0.0;
  c.number(t, "trajectory", "leg_duration_s", leg);
  if (leg > 0.0 && spec.durations.empty() && spec.via_points.size() >= 2) {
    spec.durations.assign(spec.via_points.size() - 1, leg);
  }
  if (spec.kind == TrajectoryKind::kSpline) {
    if (spec.via_points.size() < 2) c.fail("trajectory.via_points", "spline needs at least 2 via points");
    if (spec.durations.size() + 1 != spec.via_points.size()) {
      c.fail("trajectory.durations_s", "needs one duration per leg (or set leg_duration_s)");
    }
  }
  c.number(t, "trajectory", "bank_gain", spec.bank_gain);
  c.vec3(t, "trajectory", "origin", spec.origin);
  c.number(t, "trajectory", "radius", spec.radius);
  c.number(t, "trajectory", "angular_rate", spec.angular_rate);
}

void parse_landmarks(Checker& c, const json& doc, std::vector<LandmarkSpec>& out) {
  const auto it = doc.find("landmarks");
  if (it == doc.end()) {
    c.fail("landmarks", "required");
    return;
  }
  if (!it->is_array() || it->empty()) {
    c.fail("landmarks", "expected a non-empty array");
    return;
  }
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& l = (*it)[i];
    const std::string where = "landmarks[" + std::to_string(i) + "]";
    if (!l.is_object()) {
      c.fail(where, "expected an object");
      continue;
    }
    c.allow_only(l, where, {"id", "position", "anchor"});
    LandmarkSpec spec;
    c.number(l, where, "id", spec.id, true);
    c.vec3(l, where, "position", spec.position, true);
    c.boolean(l, where, "anchor", spec.anchor);
    out.push_back(spec);
  }
}

}  // namespace

FilterSettings RunConfig::filter_settings() const {
  FilterSettings s;
  s.noise = scenario.noise;
  s.constants.gravity = scenario.gravity;
  s.sigma_p_prior = filter.sigma_p_prior;
  s.prior.attitude_sigma = filter.attitude_prior_rad;
  s.prior.position_sigma = filter.position_prior_m;
  s.prior.bias_gyro_sigma = filter.bias_prior_sigma_g;
  s.prior.bias_accel_sigma = filter.bias_prior_sigma_a;
  s.window = filter.window_w;
  s.adaptive = filter.adaptive;
  s.eigen_floor = filter.eigen_floor;
  s.noise_structure = filter.noise_structure;
  s.mode = filter.paper_mode ? DiscretizationMode::kPaper : DiscretizationMode::kExact;
  return s;
}

RankPolicy RunConfig::rank_policy() const {
  RankPolicy p;
  p.kappa = filter.rank_tol_kappa;
  p.balance = observability.balance;
  p.exact_order = observability.exact_order;
  return p;
}

RunConfig parse_config(const nlohmann::json& doc) {
  Checker c;
  RunConfig cfg;
  if (!doc.is_object()) {
    c.fail("(root)", "expected a JSON object");
    c.finish();
  }
  cfg.source = doc;
  c.allow_only(doc, "",
               {"name", "trajectory", "landmarks", "imu", "sensor", "filter", "observability", "seed", "duration_s",
                "gravity"});

  if (const auto it = doc.find("name"); it != doc.end()) {
    if (it->is_string()) {
      cfg.name = it->get<std::string>();
    } else {
      c.fail("name", "expected a string");
    }
  }

  ScenarioConfig& sc = cfg.scenario;
  if (const json* t = c.object(doc, "", "trajectory", true)) parse_trajectory(c, *t, sc.trajectory);
  parse_landmarks(c, doc, sc.landmarks);

  if (const json* imu = c.object(doc, "", "imu", false)) {
    c.allow_only(*imu, "imu", {"rate_hz", "sigma_g", "sigma_bg", "sigma_a", "sigma_ba", "bias_g", "bias_a"});
    c.number(*imu, "imu", "rate_hz", sc.imu_rate);
    c.number(*imu, "imu", "sigma_g", sc.noise.sigma_g);
    c.number(*imu, "imu", "sigma_bg", sc.noise.sigma_bg);
    c.number(*imu, "imu", "sigma_a", sc.noise.sigma_a);
    c.number(*imu, "imu", "sigma_ba", sc.noise.sigma_ba);
    c.vec3(*imu, "imu", "bias_g", sc.bias_g);
    c.vec3(*imu, "imu", "bias_a", sc.bias_a);
  }
  if (const json* sensor = c.object(doc, "", "sensor", false)) {
    c.allow_only(*sensor, "sensor", {"rate_hz", "sigma_p_range"});
    c.number(*sensor, "sensor", "rate_hz", sc.obs_rate);
    if (const auto it = sensor->find("sigma_p_range"); it != sensor->end()) {
      if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
        c.fail("sensor.sigma_p_range", "expected [lo, hi]");
      } else {
        sc.sigma_p_range = {(*it)[0].get<double>(), (*it)[1].get<double>()};
      }
    }
  }
  if (const json* f = c.object(doc, "", "filter", false)) {
    c.allow_only(*f, "filter",
                 {"window_w", "rank_tol_kappa", "thresholds", "sigma_p_prior", "attitude_prior_deg", "position_prior_m",
                  "bias_prior_sigma_g",
                  "bias_prior_sigma_a", "adaptive", "eigen_floor", "noise_structure", "anchor_init", "paper_mode"});
    c.number(*f, "filter", "window_w", cfg.filter.window_w);
    c.number(*f, "filter", "rank_tol_kappa", cfg.filter.rank_tol_kappa);
    c.number(*f, "filter", "sigma_p_prior", cfg.filter.sigma_p_prior);
    double att_deg = cfg.filter.attitude_prior_rad * 180.0 / 3.14159265358979323846;
    c.number(*f, "filter", "attitude_prior_deg", att_deg);
    cfg.filter.attitude_prior_rad = att_deg * 3.14159265358979323846 / 180.0;
    c.number(*f, "filter", "position_prior_m", cfg.filter.position_prior_m);
    c.number(*f, "filter", "bias_prior_sigma_g", cfg.filter.bias_prior_sigma_g);
    c.number(*f, "filter", "bias_prior_sigma_a", cfg.filter.bias_prior_sigma_a);
    c.boolean(*f, "filter", "adaptive", cfg.filter.adaptive);
    c.number(*f, "filter", "eigen_floor", cfg.filter.eigen_floor);
    c.boolean(*f, "filter", "paper_mode", cfg.filter.paper_mode);
    if (const auto it = f->find("anchor_init"); it != f->end()) {
      if (*it == "observed") {
        cfg.filter.anchor_init = AnchorInit::kObserved;
      } else if (*it == "surveyed") {
        cfg.filter.anchor_init = AnchorInit::kSurveyed;
      } else {
        c.fail("filter.anchor_init", "expected \"observed\" or \"surveyed\"");
      }
    }
    if (const auto it = f->find("noise_structure"); it != f->end()) {
      if (*it == "block") {
        cfg.filter.noise_structure = NoiseStructure::kBlockDiagonal;
      } else if (*it == "full") {
        cfg.filter.noise_structure = NoiseStructure::kFull;
      } else {
        c.fail("filter.noise_structure", "expected \"block\" or \"full\"");
      }
    }
    if (const json* th = c.object(*f, "filter", "thresholds", false)) {
      c.allow_only(*th, "filter.thresholds", {"position_m", "attitude_deg"});
      c.number(*th, "filter.thresholds", "position_m", cfg.filter.thresholds.position_m);
      double deg = cfg.filter.thresholds.attitude_rad * 180.0 / 3.14159265358979323846;
      c.number(*th, "filter.thresholds", "attitude_deg", deg);
      cfg.filter.thresholds.attitude_rad = deg * 3.14159265358979323846 / 180.0;
    }
  }
  if (const json* o = c.object(doc, "", "observability", false)) {
    c.allow_only(*o, "observability", {"segment_s", "exact_order", "balance"});
    c.number(*o, "observability", "segment_s", cfg.observability.segment_s);
    c.boolean(*o, "observability", "exact_order", cfg.observability.exact_order);
    c.boolean(*o, "observability", "balance", cfg.observability.balance);
  }
  c.number(doc, "", "seed", sc.seed);
  c.number(doc, "", "duration_s", sc.duration);
  c.vec3(doc, "", "gravity", sc.gravity);

  // Value-level checks.
  if (!(sc.imu_rate > 0.0)) c.fail("imu.rate_hz", "must be > 0");
  if (!(sc.obs_rate > 0.0)) c.fail("sensor.rate_hz", "must be > 0");
  if (sc.imu_rate > 0.0 && sc.obs_rate > 0.0) {
    const double ratio = sc.imu_rate / sc.obs_rate;
    if (ratio < 1.0 - 1e-12 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
      c.fail("sensor.rate_hz", "imu.rate_hz must be an integer multiple of it");
    }
  }
  for (const auto& [key, v] : {std::pair{"imu.sigma_g", sc.noise.sigma_g}, std::pair{"imu.sigma_bg", sc.noise.sigma_bg},
                               std::pair{"imu.sigma_a", sc.noise.sigma_a}, std::pair{"imu.sigma_ba", sc.noise.sigma_ba}}) {
    if (!(v >= 0.0)) c.fail(key, "must be >= 0");
  }
  if (!(sc.sigma_p_range[0] >= 0.0) || sc.sigma_p_range[1] < sc.sigma_p_range[0]) {
    c.fail("sensor.sigma_p_range", "must satisfy 0 <= lo <= hi");
  }
  if (!(sc.duration > 0.0)) c.fail("duration_s", "must be > 0");
  if (cfg.filter.window_w < 1) c.fail("filter.window_w", "must be >= 1");
  if (!(cfg.filter.rank_tol_kappa > 0.0)) c.fail("filter.rank_tol_kappa", "must be > 0");
  if (!(cfg.filter.sigma_p_prior > 0.0)) c.fail("filter.sigma_p_prior", "must be > 0");
  if (!(cfg.filter.attitude_prior_rad >= 0.0)) c.fail("filter.attitude_prior_deg", "must be >= 0");
  if (!(cfg.filter.position_prior_m >= 0.0)) c.fail("filter.position_prior_m", "must be >= 0");
  if (!(cfg.filter.eigen_floor > 0.0)) c.fail("filter.eigen_floor", "must be > 0");
  if (!(cfg.observability.segment_s > 0.0)) c.fail("observability.segment_s", "must be > 0");
  if (!sc.landmarks.empty()) {
    bool any_anchor = false;
    std::set<LandmarkId> seen;
    for (std::size_t i = 0; i < sc.landmarks.size(); ++i) {
      any_anchor = any_anchor || sc.landmarks[i].anchor;
      if (!seen.insert(sc.landmarks[i].id).second) c.fail("landmarks[" + std::to_string(i) + "].id", "duplicate id");
    }
    if (!any_anchor) c.fail("landmarks", "at least one landmark must have anchor = true");
  }
  c.finish();
  sc.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kSchema, "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

void override_seed(RunConfig& config, std::uint64_t seed) {
  config.scenario.seed = seed;
  config.source["seed"] = seed;
}

void set_paper_mode(RunConfig& config, bool on) {
  config.filter.paper_mode = on;
  config.source["filter"]["paper_mode"] = on;
}

}  // namespace aslam
