#pragma once

// End-to-end experiment pipelines behind the CLI. Each `run_*` function
// computes its results in memory; `run_experiment` adds artifact files and
// the manifest.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "koopkit/analysis.hpp"
#include "koopkit/dictionary.hpp"
#include "koopkit/edmd.hpp"
#include "koopkit/errors.hpp"
#include "koopkit/generator.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/newton.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/random.hpp"
#include "koopkit/spectral.hpp"
#include "koopkit/systems.hpp"
#include "koopkit/types.hpp"

namespace koopkit::experiments {

using io::Json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

// Streams derived from the master seed.
enum SeedStream : std::uint64_t { kSampling = 1, kDictionary = 2, kClustering = 3, kEvaluation = 4 };

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"euler-spectrum",   "himmelblau",     "nesterov-generator",
                                              "muellerbrown-100d", "newton-eigen",   "newton-spectrum",
                                              "newton-fractal",    "window-scan"};
  return names;
}

inline bool is_experiment(const std::string& name) {
  const auto& n = experiment_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

inline Json default_params(const std::string& experiment) {
  if (experiment == "euler-spectrum") {
    Json grid = Json::array();
    for (int k = 1; k <= 25; ++k) grid.push_back(k / 10.0);
    return {{"a", 1.0},          {"a_dt_values", grid},       {"n_samples", 200},
            {"degree", 3},       {"domain", {-1.0, 1.0}},     {"stability_tol", 1e-6}};
  }
  if (experiment == "himmelblau") {
    return {{"step_size", 0.001},
            {"n_pairs", 3500},
            {"box", {-4.0, 4.0}},
            {"n_rbf", 500},
            {"delta", 1e-3},
            {"eig_tol", 0.02},
            {"n_clusters", 4},
            {"restarts", 5},
            {"n_decomposition_points", 5000},
            {"oracle_steps", 20000},
            {"prediction_starts", {{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0}, {2.0, -2.0}}},
            {"prediction_steps", 500},
            {"expected_near_one", 4},
            {"min_agreement", 0.95},
            {"minimum_tol", 0.2}};
  }
  if (experiment == "nesterov-generator") {
    return {{"step_size", 0.01},       {"friction", 3.0},       {"x_range", {-1.0, 1.0}},
            {"v_range", {-1.0, 1.0}},  {"t_range", {0.2, 1.2}}, {"n_samples", 4000},
            {"n_rbf", 125},            {"delta", 1e-3},         {"interior_shrink", 0.2},
            {"n_eval", 2000},          {"max_relative_error", 0.15}, {"tdot_tol", 0.1},
            {"tdot_fraction", 0.9}};
  }
  if (experiment == "muellerbrown-100d") {
    return {{"dim", 100},        {"rotation_seed", 5},     {"step_size", 1e-4},
            {"n_samples", 2500}, {"burn_in", 5},           {"n_rbf", 625},
            {"delta", 1e-3},     {"n_test_starts", 10},    {"horizon", 20},
            {"max_relative_error", 0.05}};
  }
  if (experiment == "newton-eigen") {
    return {{"c", {1.0, 0.0}},          {"n_points", 100},         {"powers", {-2, -1, 1, 2}},
            {"eigen_tol", 1e-9},        {"closed_form_z0", 0.5},   {"closed_form_steps", 20},
            {"closed_form_tol", 1e-6},  {"histogram_z0", 0.3},     {"histogram_length", 1000000},
            {"histogram_bins", 50},     {"histogram_range", 5.0},  {"histogram_tol", 0.1}};
  }
  if (experiment == "newton-spectrum") {
    return {{"z0", 0.5},          {"length", 100000},   {"order", 500},
            {"grid", 2048},       {"atom_exclusion", 0.3}, {"min_atom_ratio", 10.0},
            {"max_flatness", 3.0}};
  }
  if (experiment == "newton-fractal") {
    return {{"w", {0.589, 0.605}}, {"region", {-2.0, 2.0, -2.0, 2.0}}, {"resolution", 800},
            {"tol", 0.01},         {"max_iter", 100},                  {"fraction_tol", 0.01},
            {"quadratic_resolution", 401}};
  }
  if (experiment == "window-scan") {
    return {{"step_size", 0.01},
            {"n_samples", 2000},
            {"n_rbf", 50},
            {"delta", 1e-3},
            {"tolerance", 0.02},
            {"windows",
             {{{"name", "A"}, {"lower", {-1.0, -0.5}}, {"upper", {0.4, 0.5}}, {"expect", "outside"}},
              {{"name", "B"}, {"lower", {-1.0, -0.5}}, {"upper", {1.0, 0.5}}, {"expect", "inside"}},
              {{"name", "C"}, {"lower", {-0.5, -0.5}}, {"upper", {1.0, 0.5}}, {"expect", "outside"}},
              {{"name", "D"}, {"lower", {0.3, -0.5}}, {"upper", {1.1, 0.5}}, {"expect", "inside"}}}}};
  }
  throw ConfigError("unknown experiment '" + experiment + "'");
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 1;
  edmd::FitMode fit_mode = edmd::FitMode::Standard;
  std::string output_dir;
  Json params;  // fully resolved, defaults included

  Json to_json() const {
    return {{"schema_version", kSchemaVersion},
            {"experiment", experiment},
            {"seed", seed},
            {"fit_mode", edmd::fit_mode_name(fit_mode)},
            {"output_dir", output_dir},
            {"params", params}};
  }
};

namespace detail {

inline bool same_kind(const Json& def, const Json& given) {
  if (def.is_number_float()) return given.is_number();
  if (def.is_number_integer()) return given.is_number_integer();
  if (def.is_boolean()) return given.is_boolean();
  if (def.is_string()) return given.is_string();
  if (def.is_array()) return given.is_array();
  if (def.is_object()) return given.is_object();
  return false;
}

inline const char* kind_name(const Json& j) {
  if (j.is_number_float()) return "a number";
  if (j.is_number_integer()) return "an integer";
  if (j.is_boolean()) return "a boolean";
  if (j.is_string()) return "a string";
  if (j.is_array()) return "an array";
  return "an object";
}

}  // namespace detail

/// Overwrites one parameter, checking the key exists and the value has the
/// default's type.
inline void set_param(ExperimentConfig& cfg, const std::string& key, const Json& value) {
  if (!cfg.params.contains(key))
    throw ConfigError("experiment '" + cfg.experiment + "' has no parameter '" + key + "'");
  const Json def = default_params(cfg.experiment).at(key);
  if (!detail::same_kind(def, value))
    throw ConfigError("parameter '" + key + "' must be " + detail::kind_name(def));
  cfg.params[key] = value;
}

inline ExperimentConfig make_config(const std::string& experiment) {
  if (!is_experiment(experiment)) throw ConfigError("unknown experiment '" + experiment + "'");
  ExperimentConfig cfg;
  cfg.experiment = experiment;
  cfg.params = default_params(experiment);
  cfg.output_dir = "koopkit-out/" + experiment;
  return cfg;
}

inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known{"schema_version", "experiment", "seed",
                                              "fit_mode",       "output_dir", "params"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key '" + it.key() + "'");
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
    throw ConfigError("config needs an integer schema_version");
  if (j.at("schema_version").get<int>() != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + j.at("schema_version").dump() + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  if (!j.contains("experiment") || !j.at("experiment").is_string())
    throw ConfigError("config needs an experiment name");
  ExperimentConfig cfg = make_config(j.at("experiment").get<std::string>());
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned() && !(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0))
      throw ConfigError("seed must be a nonnegative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("fit_mode")) {
    if (!j.at("fit_mode").is_string()) throw ConfigError("fit_mode must be a string");
    cfg.fit_mode = edmd::parse_fit_mode(j.at("fit_mode").get<std::string>());
  }
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("output_dir must be a string");
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }
  if (j.contains("params")) {
    const Json& p = j.at("params");
    if (!p.is_object()) throw ConfigError("params must be an object");
    for (auto it = p.begin(); it != p.end(); ++it) set_param(cfg, it.key(), it.value());
  }
  return cfg;
}

namespace detail {

template <class T>
T get(const Json& params, const char* key) {
  try {
    return params.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("parameter '") + key + "': " + e.what());
  }
}

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

inline std::pair<double, double> range_param(const Json& p, const char* key) {
  const auto v = get<std::vector<double>>(p, key);
  require(v.size() == 2 && v[0] < v[1], std::string(key) + " must be [lo, hi] with lo < hi");
  return {v[0], v[1]};
}

inline Complex complex_param(const Json& p, const char* key) {
  const auto v = get<std::vector<double>>(p, key);
  require(v.size() == 2, std::string(key) + " must be [re, im]");
  return {v[0], v[1]};
}

inline void require_rbf_count(const Json& p, const char* samples_key) {
  const auto n_rbf = get<long long>(p, "n_rbf");
  const auto n = get<long long>(p, samples_key);
  require(n >= 1, std::string(samples_key) + " must be positive");
  require(n_rbf >= 0, "n_rbf must be nonnegative");
  require(n_rbf <= n, "n_rbf (" + std::to_string(n_rbf) + ") exceeds the sample count (" + std::to_string(n) + ")");
  require(get<double>(p, "delta") > 0.0, "delta must be positive");
}

// Pairs used for fitting when the trailing 10% is held out.
inline long long training_count(long long n) { return n >= 10 ? n - n / 10 : n; }

}  // namespace detail

/// Checks parameter values before any computation.
inline void validate(const ExperimentConfig& cfg) {
  using detail::get;
  using detail::require;
  const Json& p = cfg.params;
  const std::string& e = cfg.experiment;
  if (e == "euler-spectrum") {
    require(get<double>(p, "a") > 0.0, "a must be positive");
    for (double v : get<std::vector<double>>(p, "a_dt_values")) require(v > 0.0, "a_dt_values must be positive");
    require(get<int>(p, "n_samples") >= 2, "n_samples must be at least 2");
    require(get<int>(p, "degree") >= 1, "degree must be at least 1");
    detail::range_param(p, "domain");
  } else if (e == "himmelblau") {
    detail::require_rbf_count(p, "n_pairs");
    require(get<long long>(p, "n_rbf") <= detail::training_count(get<long long>(p, "n_pairs")),
            "n_rbf exceeds the number of training pairs");
    require(get<double>(p, "step_size") > 0.0, "step_size must be positive");
    detail::range_param(p, "box");
    require(get<int>(p, "n_clusters") >= 1, "n_clusters must be positive");
    require(get<int>(p, "restarts") >= 1, "restarts must be positive");
    require(get<int>(p, "n_decomposition_points") >= get<int>(p, "n_clusters"),
            "n_decomposition_points must be at least n_clusters");
    require(get<int>(p, "prediction_steps") >= 0, "prediction_steps must be nonnegative");
    for (const auto& s : get<std::vector<std::vector<double>>>(p, "prediction_starts"))
      require(s.size() == 2, "prediction_starts entries must be 2-vectors");
  } else if (e == "nesterov-generator") {
    detail::require_rbf_count(p, "n_samples");
    require(get<long long>(p, "n_rbf") <= detail::training_count(get<long long>(p, "n_samples")),
            "n_rbf exceeds the number of training pairs");
    require(get<double>(p, "step_size") > 0.0, "step_size must be positive");
    detail::range_param(p, "x_range");
    detail::range_param(p, "v_range");
    require(detail::range_param(p, "t_range").first > 0.0, "t_range must be positive");
    const double shrink = get<double>(p, "interior_shrink");
    require(shrink >= 0.0 && shrink < 1.0, "interior_shrink must lie in [0, 1)");
    require(get<int>(p, "n_eval") >= 1, "n_eval must be positive");
  } else if (e == "muellerbrown-100d") {
    detail::require_rbf_count(p, "n_samples");
    require(get<long long>(p, "n_rbf") <= detail::training_count(get<long long>(p, "n_samples")),
            "n_rbf exceeds the number of training pairs");
    require(get<int>(p, "dim") >= 2, "dim must be at least 2");
    require(get<double>(p, "step_size") > 0.0, "step_size must be positive");
    require(get<int>(p, "burn_in") >= 0, "burn_in must be nonnegative");
    require(get<int>(p, "n_test_starts") >= 1, "n_test_starts must be positive");
    require(get<int>(p, "n_test_starts") <= get<int>(p, "n_samples") / 10,
            "n_test_starts exceeds the held-out pairs");
    require(get<int>(p, "horizon") >= 1, "horizon must be positive");
  } else if (e == "newton-eigen") {
    detail::complex_param(p, "c");
    require(get<int>(p, "n_points") >= 1, "n_points must be positive");
    require(get<double>(p, "closed_form_z0") != 0.0, "closed_form_z0 must be nonzero");
    require(get<double>(p, "histogram_z0") != 0.0, "histogram_z0 must be nonzero");
    require(get<int>(p, "closed_form_steps") >= 0, "closed_form_steps must be nonnegative");
    require(get<long long>(p, "histogram_length") >= 1, "histogram_length must be positive");
    require(get<int>(p, "histogram_bins") >= 1, "histogram_bins must be positive");
    require(get<double>(p, "histogram_range") > 0.0, "histogram_range must be positive");
  } else if (e == "newton-spectrum") {
    const auto length = get<long long>(p, "length");
    const auto order = get<long long>(p, "order");
    require(order >= 1, "order must be at least 1");
    require(order < length, "order must be smaller than length");
    require(get<int>(p, "grid") >= 8, "grid must have at least 8 points");
    require(get<double>(p, "atom_exclusion") > 0.0 && get<double>(p, "atom_exclusion") < M_PI,
            "atom_exclusion must lie in (0, pi)");
  } else if (e == "newton-fractal") {
    detail::complex_param(p, "w");
    const auto r = get<std::vector<double>>(p, "region");
    require(r.size() == 4 && r[0] < r[1] && r[2] < r[3], "region must be [x_min, x_max, y_min, y_max]");
    require(get<int>(p, "resolution") >= 2, "resolution must be at least 2");
    require(get<int>(p, "quadratic_resolution") >= 1, "quadratic_resolution must be positive");
    require(get<double>(p, "tol") > 0.0, "tol must be positive");
    require(get<int>(p, "max_iter") >= 1, "max_iter must be positive");
  } else if (e == "window-scan") {
    detail::require_rbf_count(p, "n_samples");
    require(get<long long>(p, "n_rbf") <= detail::training_count(get<long long>(p, "n_samples")),
            "n_rbf exceeds the number of training pairs");
    require(get<double>(p, "step_size") > 0.0, "step_size must be positive");
    const Json& w = p.at("windows");
    require(!w.empty(), "windows must be nonempty");
    for (const auto& win : w) {
      require(win.is_object() && win.contains("name") && win.contains("lower") && win.contains("upper") &&
                  win.contains("expect"),
              "each window needs name, lower, upper and expect");
      for (auto it = win.begin(); it != win.end(); ++it)
        require(it.key() == "name" || it.key() == "lower" || it.key() == "upper" || it.key() == "expect",
                "unknown window key '" + it.key() + "'");
      const auto lo = detail::get<std::vector<double>>(win, "lower");
      const auto hi = detail::get<std::vector<double>>(win, "upper");
      require(lo.size() == 2 && hi.size() == 2 && lo[0] < hi[0] && lo[1] < hi[1],
              "window bounds must be 2-d with lower < upper");
      const auto expect = detail::get<std::string>(win, "expect");
      require(expect == "inside" || expect == "outside", "window expect must be inside or outside");
    }
  }
}

// ---------------------------------------------------------------------------
// Results

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string relation;  // how value compares to threshold when passing
};

inline Json checks_json(const std::vector<Check>& checks) {
  Json out = Json::array();
  for (const auto& c : checks)
    out.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"relation", c.relation},
                   {"threshold", c.threshold}});
  return out;
}

inline Check check_le(std::string name, double value, double threshold) {
  return {std::move(name), value <= threshold, value, threshold, "<="};
}
inline Check check_lt(std::string name, double value, double threshold) {
  return {std::move(name), value < threshold, value, threshold, "<"};
}
inline Check check_gt(std::string name, double value, double threshold) {
  return {std::move(name), value > threshold, value, threshold, ">"};
}
inline Check check_ge(std::string name, double value, double threshold) {
  return {std::move(name), value >= threshold, value, threshold, ">="};
}

struct RunOutput {
  Json summary = Json::object();
  Json seeds = Json::object();
  Json residuals = Json::object();
  Json timings = Json::object();
  std::vector<Check> checks;
  std::vector<std::string> files;  // relative to the output directory

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline edmd::FitOptions fit_options(edmd::FitMode mode) {
  edmd::FitOptions o;
  o.mode = mode;
  return o;
}

inline PointSet training_rows(const systems::SnapshotPairSet& pairs) {
  return pairs.x.topRows(detail::training_count(pairs.size()));
}

/// Best label agreement over all relabelings of `labels` (k up to 8).
inline double label_agreement(const std::vector<int>& labels, const std::vector<int>& truth, int k) {
  if (labels.size() != truth.size() || labels.empty()) throw InvalidInput("label_agreement: size mismatch");
  if (k < 1 || k > 8) throw InvalidInput("label_agreement: k must lie in [1, 8]");
  std::vector<std::vector<long>> counts(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k || truth[i] < 0 || truth[i] >= k) continue;
    ++counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(truth[i])];
  }
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  long best = 0;
  do {
    long s = 0;
    for (int a = 0; a < k; ++a) s += counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// euler-spectrum

struct EulerRow {
  double a_dt;
  double max_abs;
  ComplexVector eigenvalues;
};

inline EulerRow euler_spectrum_point(double a, double a_dt, int n_samples, int degree, double lo, double hi,
                                     std::uint64_t seed, edmd::FitMode mode) {
  const systems::ForwardEuler sys(a, a_dt / a);
  const auto pairs = systems::sample_pairs(sys, systems::UniformBox{StateVector::Constant(1, lo), StateVector::Constant(1, hi)},
                                           static_cast<std::size_t>(n_samples), 0, seed);
  const auto dict = dictionary::Dictionary::monomial(1, degree);
  const auto model = edmd::fit(pairs, dict, fit_options(mode));
  return {a_dt, model.eigenvalues.cwiseAbs().maxCoeff(), model.eigenvalues};
}

inline RunOutput run_euler_spectrum(const ExperimentConfig& cfg, std::vector<EulerRow>* rows_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  const std::uint64_t sampling = derive_seed(cfg.seed, kSampling);
  out.seeds["sampling"] = sampling;
  const auto [lo, hi] = detail::range_param(p, "domain");
  const double tol = get<double>(p, "stability_tol");
  std::vector<EulerRow> rows;
  for (double a_dt : get<std::vector<double>>(p, "a_dt_values"))
    rows.push_back(euler_spectrum_point(get<double>(p, "a"), a_dt, get<int>(p, "n_samples"), get<int>(p, "degree"), lo,
                                        hi, sampling, cfg.fit_mode));
  double worst_stable = 0.0, least_unstable = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) {
    if (r.a_dt <= 2.0 + 1e-12)
      worst_stable = std::max(worst_stable, r.max_abs);
    else
      least_unstable = std::min(least_unstable, r.max_abs);
  }
  out.checks.push_back(check_le("max|lambda| for a*dt <= 2", worst_stable, 1.0 + tol));
  if (std::isfinite(least_unstable)) out.checks.push_back(check_gt("max|lambda| for a*dt > 2", least_unstable, 1.0));
  out.summary["max_abs_stable"] = worst_stable;
  out.summary["min_max_abs_unstable"] = least_unstable;
  if (rows_out) *rows_out = std::move(rows);
  return out;
}

// ---------------------------------------------------------------------------
// himmelblau

struct HimmelblauRun {
  systems::SnapshotPairSet pairs;
  edmd::KoopmanModel model;
  PointSet decomposition_points;
  analysis::Decomposition decomposition;
  std::vector<int> oracle_labels;
  std::vector<PointSet> predictions;
  std::vector<PointSet> true_trajectories;
};

// The four minima of the Himmelblau function.
inline const std::vector<StateVector>& himmelblau_minima() {
  static const std::vector<StateVector> m{StateVector{{3.0, 2.0}}, StateVector{{-2.805118086952745, 3.131312518250573}},
                                          StateVector{{-3.779310253377747, -3.283185991286170}},
                                          StateVector{{3.584428340330492, -1.848126526964404}}};
  return m;
}

inline int nearest_index(const StateVector& x, const std::vector<StateVector>& targets) {
  int best = 0;
  for (std::size_t i = 1; i < targets.size(); ++i)
    if ((x - targets[i]).norm() < (x - targets[static_cast<std::size_t>(best)]).norm()) best = static_cast<int>(i);
  return best;
}

inline RunOutput run_himmelblau(const ExperimentConfig& cfg, HimmelblauRun* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  const double h = get<double>(p, "step_size");
  const auto [lo, hi] = detail::range_param(p, "box");
  const auto f = std::make_shared<systems::Himmelblau>();
  const systems::GradientDescent gd(f, h);
  const std::uint64_t s_sampling = derive_seed(cfg.seed, kSampling), s_dict = derive_seed(cfg.seed, kDictionary),
                      s_cluster = derive_seed(cfg.seed, kClustering), s_eval = derive_seed(cfg.seed, kEvaluation);
  out.seeds = {{"sampling", s_sampling}, {"dictionary", s_dict}, {"clustering", s_cluster}, {"evaluation", s_eval}};

  HimmelblauRun run;
  const systems::UniformBox box{StateVector::Constant(2, lo), StateVector::Constant(2, hi)};
  run.pairs = systems::sample_pairs(gd, box, get<std::size_t>(p, "n_pairs"), 0, s_sampling);
  const auto dict = dictionary::build_dictionary(training_rows(run.pairs), get<int>(p, "n_rbf"), get<double>(p, "delta"),
                                                 s_dict, true, true);
  run.model = edmd::fit(run.pairs, dict, fit_options(cfg.fit_mode));
  out.timings["fit_seconds"] = total.seconds();

  const double eig_tol = get<double>(p, "eig_tol");
  const auto near_one = analysis::eigenvalues_near_one(run.model.eigenvalues, eig_tol);

  // Decomposition of fresh points, compared with the basin reached by
  // integrating gradient descent from each point.
  const auto n_dec = get<std::size_t>(p, "n_decomposition_points");
  std::mt19937_64 rng = make_rng(s_eval);
  run.decomposition_points.resize(static_cast<Eigen::Index>(n_dec), 2);
  for (Eigen::Index i = 0; i < run.decomposition_points.rows(); ++i)
    run.decomposition_points.row(i) = systems::draw(box, rng).transpose();
  const int k = get<int>(p, "n_clusters");
  double agreement = 0.0;
  const int oracle_steps = get<int>(p, "oracle_steps");
  run.oracle_labels.resize(n_dec);
  parallel_for(n_dec, [&](std::size_t i) {
    StateVector x = run.decomposition_points.row(static_cast<Eigen::Index>(i)).transpose();
    for (int s = 0; s < oracle_steps; ++s) x = gd.advance(x);
    run.oracle_labels[i] = nearest_index(x, himmelblau_minima());
  });
  if (!near_one.empty()) {
    run.decomposition =
        analysis::ergodic_decomposition(run.model, run.decomposition_points, eig_tol, k, s_cluster, get<int>(p, "restarts"));
    agreement = label_agreement(run.decomposition.labels, run.oracle_labels, std::max(k, 4));
  }

  // Surrogate predictions against true gradient-descent trajectories.
  const auto starts = get<std::vector<std::vector<double>>>(p, "prediction_starts");
  const int steps = get<int>(p, "prediction_steps");
  double worst_endpoint = 0.0;
  Json endpoints = Json::array();
  for (const auto& s : starts) {
    const StateVector x0{{s[0], s[1]}};
    run.predictions.push_back(edmd::predict(run.model, x0, steps));
    run.true_trajectories.push_back(systems::trajectory(gd, x0, steps));
    const StateVector end_true = run.true_trajectories.back().bottomRows(1).transpose();
    const StateVector target = himmelblau_minima()[static_cast<std::size_t>(nearest_index(end_true, himmelblau_minima()))];
    const StateVector end_pred = run.predictions.back().bottomRows(1).transpose();
    const double dist = end_pred.allFinite() ? (end_pred - target).norm() : std::numeric_limits<double>::infinity();
    worst_endpoint = std::max(worst_endpoint, dist);
    endpoints.push_back({{"start", s}, {"predicted_end", {end_pred(0), end_pred(1)}},
                         {"minimum", {target(0), target(1)}}, {"distance", dist}});
  }

  out.checks.push_back({"eigenvalues with |lambda-1| < eig_tol", static_cast<int>(near_one.size()) == get<int>(p, "expected_near_one"),
                        static_cast<double>(near_one.size()), static_cast<double>(get<int>(p, "expected_near_one")), "=="});
  out.checks.push_back(check_ge("decomposition agreement with basin oracle", agreement, get<double>(p, "min_agreement")));
  out.checks.push_back(check_le("worst predicted endpoint distance to minimum", worst_endpoint, get<double>(p, "minimum_tol")));
  out.summary["eigenvalues_near_one"] = near_one.size();
  out.summary["decomposition_agreement"] = agreement;
  out.summary["prediction_endpoints"] = endpoints;
  out.summary["max_abs_eigenvalue"] = run.model.eigenvalues.cwiseAbs().maxCoeff();
  out.summary["pairs_dropped"] = run.pairs.dropped;
  out.residuals = edmd::residuals_json(run.model.residuals);
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(run);
  return out;
}

// ---------------------------------------------------------------------------
// nesterov-generator

struct NesterovRun {
  edmd::KoopmanModel model;
  generator::GeneratorModel gen;
  PointSet eval_points;
  RealMatrix field;      // reconstructed
  RealMatrix reference;  // continuous-time ODE
};

inline RunOutput run_nesterov_generator(const ExperimentConfig& cfg, NesterovRun* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  const auto f = std::make_shared<systems::QuadraticPotential>(RealMatrix::Identity(1, 1));
  const systems::Nesterov sys(f, get<double>(p, "step_size"), get<double>(p, "friction"));
  const auto [xl, xh] = detail::range_param(p, "x_range");
  const auto [vl, vh] = detail::range_param(p, "v_range");
  const auto [tl, th] = detail::range_param(p, "t_range");
  const std::uint64_t s_sampling = derive_seed(cfg.seed, kSampling), s_dict = derive_seed(cfg.seed, kDictionary),
                      s_eval = derive_seed(cfg.seed, kEvaluation);
  out.seeds = {{"sampling", s_sampling}, {"dictionary", s_dict}, {"evaluation", s_eval}};

  NesterovRun run;
  const systems::UniformBox box{StateVector{{xl, vl, tl}}, StateVector{{xh, vh, th}}};
  const auto pairs = systems::sample_pairs(sys, box, get<std::size_t>(p, "n_samples"), 0, s_sampling);
  const PointSet train = training_rows(pairs);
  const auto dict =
      dictionary::build_dictionary(train, get<int>(p, "n_rbf"), get<double>(p, "delta"), s_dict, true, true);
  run.model = edmd::fit(pairs, dict, fit_options(cfg.fit_mode));
  run.gen = generator::generator_matrix(run.model);

  // Interior: the bounding box of the training data scaled about its center.
  const double keep = 1.0 - get<double>(p, "interior_shrink");
  const StateVector lo = train.colwise().minCoeff().transpose(), hi = train.colwise().maxCoeff().transpose();
  const StateVector mid = 0.5 * (lo + hi), half = 0.5 * keep * (hi - lo);
  const systems::UniformBox interior{mid - half, mid + half};
  std::mt19937_64 rng = make_rng(s_eval);
  const int n_eval = get<int>(p, "n_eval");
  run.eval_points.resize(n_eval, 3);
  run.reference.resize(n_eval, 3);
  for (int i = 0; i < n_eval; ++i) {
    run.eval_points.row(i) = systems::draw(interior, rng).transpose();
    run.reference.row(i) = sys.ode_field(run.eval_points.row(i).transpose()).transpose();
  }
  run.field = generator::reconstruct_vector_field(run.gen, run.eval_points);
  const double rel = (run.field - run.reference).norm() / run.reference.norm();
  const double tdot_tol = get<double>(p, "tdot_tol");
  int tdot_ok = 0;
  for (int i = 0; i < n_eval; ++i)
    if (std::abs(run.field(i, 2) - 1.0) <= tdot_tol) ++tdot_ok;
  const double tdot_fraction = static_cast<double>(tdot_ok) / n_eval;

  out.checks.push_back(check_lt("relative L2 error of reconstructed field", rel, get<double>(p, "max_relative_error")));
  out.checks.push_back(check_ge("fraction of points with |tdot - 1| <= tdot_tol", tdot_fraction, get<double>(p, "tdot_fraction")));
  out.summary["relative_l2_error"] = rel;
  out.summary["tdot_fraction"] = tdot_fraction;
  out.summary["thresholds_are_stand_ins"] = true;
  out.summary["filtered_eigenvalues"] = run.gen.n_filtered;
  out.summary["interior_lower"] = {mid(0) - half(0), mid(1) - half(1), mid(2) - half(2)};
  out.summary["interior_upper"] = {mid(0) + half(0), mid(1) + half(1), mid(2) + half(2)};
  out.residuals = edmd::residuals_json(run.model.residuals);
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(run);
  return out;
}

// ---------------------------------------------------------------------------
// muellerbrown-100d

struct MuellerBrownRun {
  systems::SnapshotPairSet pairs;
  edmd::KoopmanModel model;
  Eigen::VectorXd coordinate_error;  // mean |error| per coordinate / coordinate range
  std::vector<PointSet> predictions;
  std::vector<PointSet> true_trajectories;
};

inline RunOutput run_muellerbrown(const ExperimentConfig& cfg, MuellerBrownRun* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  const int dim = get<int>(p, "dim");
  const auto rotation_seed = get<std::uint64_t>(p, "rotation_seed");
  const auto f = std::make_shared<systems::EmbeddedMuellerBrown>(dim, rotation_seed);
  const systems::GradientDescent gd(f, get<double>(p, "step_size"));
  const std::uint64_t s_sampling = derive_seed(cfg.seed, kSampling), s_dict = derive_seed(cfg.seed, kDictionary);
  out.seeds = {{"sampling", s_sampling}, {"dictionary", s_dict}, {"rotation", rotation_seed}};

  MuellerBrownRun run;
  run.pairs = systems::sample_pairs(gd, systems::IsotropicGaussian{StateVector::Zero(dim), 1.0},
                                    get<std::size_t>(p, "n_samples"), get<int>(p, "burn_in"), s_sampling);
  out.timings["sampling_seconds"] = total.seconds();
  const auto dict = dictionary::build_dictionary(training_rows(run.pairs), get<int>(p, "n_rbf"), get<double>(p, "delta"),
                                                 s_dict, true, true);
  out.timings["dictionary_seconds"] = total.seconds();
  run.model = edmd::fit(run.pairs, dict, fit_options(cfg.fit_mode));
  out.timings["fit_seconds"] = total.seconds();

  // Held-out starts: the first pairs of the held-out tail.
  const Eigen::Index train = detail::training_count(run.pairs.size());
  const int n_test = get<int>(p, "n_test_starts"), horizon = get<int>(p, "horizon");
  if (run.pairs.size() - train < n_test) throw FitError("muellerbrown: not enough held-out pairs");
  const Eigen::VectorXd range = (run.pairs.x.colwise().maxCoeff() - run.pairs.x.colwise().minCoeff()).transpose();
  Eigen::VectorXd abs_err = Eigen::VectorXd::Zero(dim);
  for (int s = 0; s < n_test; ++s) {
    const StateVector x0 = run.pairs.x.row(train + s).transpose();
    run.predictions.push_back(edmd::predict(run.model, x0, horizon));
    run.true_trajectories.push_back(systems::trajectory(gd, x0, horizon));
    abs_err += (run.predictions.back().bottomRows(horizon) - run.true_trajectories.back().bottomRows(horizon))
                   .cwiseAbs()
                   .colwise()
                   .sum()
                   .transpose();
  }
  abs_err /= static_cast<double>(n_test * horizon);
  run.coordinate_error = abs_err.cwiseQuotient(range);
  const double worst = run.coordinate_error.maxCoeff();

  out.checks.push_back(check_lt("max over coordinates of mean error / range", worst, get<double>(p, "max_relative_error")));
  out.summary["max_relative_coordinate_error"] = worst;
  out.summary["mean_relative_coordinate_error"] = run.coordinate_error.mean();
  out.summary["pairs_dropped"] = run.pairs.dropped;
  out.summary["n_observables"] = run.model.size();
  out.residuals = edmd::residuals_json(run.model.residuals);
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(run);
  return out;
}

// ---------------------------------------------------------------------------
// newton-eigen

struct NewtonEigenRun {
  struct EigenRow {
    Complex z;
    int k;
    double psi;
    double psi_next;
    double rel_error;
  };
  std::vector<EigenRow> eigen_rows;
  double psi_half_i = 0.0;
  double max_real_line = 0.0;
  std::vector<double> closed_form, direct;
  std::vector<double> bin_edges;
  std::vector<long> bin_counts;
  std::vector<double> bin_probability;  // Cauchy mass per bin
  long histogram_total = 0;
};

inline RunOutput run_newton_eigen(const ExperimentConfig& cfg, NewtonEigenRun* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  const Complex c = detail::complex_param(p, "c");
  const std::uint64_t s_eval = derive_seed(cfg.seed, kEvaluation);
  out.seeds = {{"evaluation", s_eval}};
  NewtonEigenRun run;

  // Eigenfunction equation at random non-real points.
  std::mt19937_64 rng = make_rng(s_eval);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const int n_points = get<int>(p, "n_points");
  const auto powers = get<std::vector<int>>(p, "powers");
  double worst_eigen = 0.0;
  for (int i = 0; i < n_points; ++i) {
    Complex z(u(rng), u(rng));
    while (std::abs(z.imag()) < 0.05) z = Complex(u(rng), u(rng));
    for (int k : powers) {
      const double psi = newton::analytic_eigenfunction(c, k, z);
      const double next = newton::analytic_eigenfunction(c, k, newton::newton_map(c, z));
      const double expected = std::ldexp(psi, k);
      const double rel = std::abs(next - expected) / std::abs(expected);
      worst_eigen = std::max(worst_eigen, rel);
      run.eigen_rows.push_back({z, k, psi, next, rel});
    }
  }
  run.psi_half_i = newton::analytic_eigenfunction(c, 1, Complex(0.0, 0.5));
  std::uniform_real_distribution<double> ur(-10.0, 10.0);
  for (int i = 0; i < n_points; ++i)
    run.max_real_line = std::max(run.max_real_line, std::abs(newton::analytic_eigenfunction(c, 1, Complex(ur(rng), 0.0))));

  // Closed form against direct iteration.
  const double z0 = get<double>(p, "closed_form_z0");
  const int n_cf = get<int>(p, "closed_form_steps");
  const auto direct = newton::real_newton_trajectory(z0, static_cast<std::size_t>(n_cf));
  double worst_cf = 0.0;
  for (int n = 0; n <= n_cf; ++n) {
    const double cf = newton::closed_form_real_iterate(z0, n);
    run.closed_form.push_back(cf);
    run.direct.push_back(direct[static_cast<std::size_t>(n)]);
    worst_cf = std::max(worst_cf, std::abs(cf - direct[static_cast<std::size_t>(n)]) /
                                      std::max(std::abs(direct[static_cast<std::size_t>(n)]), 1e-300));
  }

  // Trajectory histogram against the Cauchy density.
  const auto length = get<std::size_t>(p, "histogram_length");
  const int bins = get<int>(p, "histogram_bins");
  const double range = get<double>(p, "histogram_range");
  const auto traj = newton::real_newton_trajectory(get<double>(p, "histogram_z0"), length - 1);
  run.bin_counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = 2.0 * range / bins;
  for (double z : traj) {
    if (z < -range || z >= range) continue;
    auto b = static_cast<std::size_t>((z + range) / width);
    if (b >= static_cast<std::size_t>(bins)) b = static_cast<std::size_t>(bins) - 1;
    ++run.bin_counts[b];
  }
  run.histogram_total = static_cast<long>(traj.size());
  double worst_bin = 0.0;
  for (int b = 0; b <= bins; ++b) run.bin_edges.push_back(-range + b * width);
  for (int b = 0; b < bins; ++b) {
    const double mass = (std::atan(run.bin_edges[static_cast<std::size_t>(b) + 1]) - std::atan(run.bin_edges[static_cast<std::size_t>(b)])) / M_PI;
    run.bin_probability.push_back(mass);
    const double observed = static_cast<double>(run.bin_counts[static_cast<std::size_t>(b)]) / run.histogram_total;
    worst_bin = std::max(worst_bin, std::abs(observed - mass) / mass);
  }

  out.checks.push_back(check_le("|psi_1(0.5i) - ln 3|", std::abs(run.psi_half_i - std::log(3.0)), get<double>(p, "eigen_tol")));
  out.checks.push_back(check_le("eigenfunction equation relative error", worst_eigen, get<double>(p, "eigen_tol")));
  out.checks.push_back(check_le("max |psi_1| on the real line", run.max_real_line, get<double>(p, "eigen_tol")));
  out.checks.push_back(check_le("closed form vs direct iteration", worst_cf, get<double>(p, "closed_form_tol")));
  out.checks.push_back(check_lt("max per-bin relative deviation from Cauchy", worst_bin, get<double>(p, "histogram_tol")));
  out.summary = {{"psi1_half_i", run.psi_half_i},       {"eigen_max_rel_error", worst_eigen},
                 {"real_line_max", run.max_real_line},  {"closed_form_max_rel_error", worst_cf},
                 {"histogram_max_rel_deviation", worst_bin}};
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(run);
  return out;
}

// ---------------------------------------------------------------------------
// newton-spectrum

struct NewtonSpectrumRun {
  spectral::MomentSequence moments;
  spectral::SpectralDensity density;
  double rho_zero = 0.0;
  double median_off_atom = 0.0;
  double flatness = 0.0;
};

// y_i = 1 + exp(2 pi i z_i) along the real Newton trajectory from z0.
inline std::vector<Complex> newton_observable_series(double z0, std::size_t length) {
  const auto z = newton::real_newton_trajectory(z0, length - 1);
  std::vector<Complex> y(length);
  for (std::size_t i = 0; i < length; ++i) y[i] = 1.0 + std::polar(1.0, 2.0 * M_PI * z[i]);
  return y;
}

inline RunOutput run_newton_spectrum(const ExperimentConfig& cfg, NewtonSpectrumRun* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  NewtonSpectrumRun run;
  const auto y = newton_observable_series(get<double>(p, "z0"), get<std::size_t>(p, "length"));
  run.moments = spectral::estimate_moments(y, get<int>(p, "order"), "1+exp(2 pi i z)");
  run.density = spectral::spectral_density(run.moments, get<int>(p, "grid"));
  const double excl = get<double>(p, "atom_exclusion");
  std::vector<double> off;
  for (Eigen::Index g = 0; g < run.density.thetas.size(); ++g) {
    const double t = run.density.thetas(g);
    if (t >= excl && t <= 2.0 * M_PI - excl) off.push_back(run.density.rho(g));
  }
  run.rho_zero = run.density.rho(0);
  std::vector<double> sorted = off;
  std::sort(sorted.begin(), sorted.end());
  run.median_off_atom = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                          : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  run.flatness = sorted.back() / sorted.front();
  out.checks.push_back(check_gt("rho(0) / median off-atom density", run.rho_zero / run.median_off_atom,
                                get<double>(p, "min_atom_ratio")));
  out.checks.push_back(check_lt("off-atom max/min ratio", run.flatness, get<double>(p, "max_flatness")));
  out.summary = {{"rho_zero", run.rho_zero},
                 {"median_off_atom", run.median_off_atom},
                 {"off_atom_min", sorted.front()},
                 {"off_atom_max", sorted.back()},
                 {"m0", run.moments.moments(0).real()}};
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(run);
  return out;
}

// ---------------------------------------------------------------------------
// newton-fractal

struct NewtonFractalRun {
  newton::FractalGrid grid;
  newton::FractalGrid coarse;
  newton::FractalGrid quadratic;
  bool quadratic_boundary_exact = false;
};

// True when every pixel above the real axis converges to +i, every pixel
// below to -i, and no pixel on the axis converges.
inline bool quadratic_boundary_is_real_axis(const newton::FractalGrid& g) {
  int plus = -1, minus = -1;
  for (std::size_t r = 0; r < g.roots.size(); ++r) {
    if (std::abs(g.roots[r] - Complex(0.0, 1.0)) < 1e-9) plus = static_cast<int>(r);
    if (std::abs(g.roots[r] - Complex(0.0, -1.0)) < 1e-9) minus = static_cast<int>(r);
  }
  if (plus < 0 || minus < 0) return false;
  for (int iy = 0; iy < g.height; ++iy)
    for (int ix = 0; ix < g.width; ++ix) {
      const double im = g.pixel_center(ix, iy).imag();
      const int r = g.root_index[g.index(ix, iy)];
      if ((im > 0.0 && r != plus) || (im < 0.0 && r != minus) || (im == 0.0 && r != -1)) return false;
    }
  return true;
}

inline RunOutput run_newton_fractal(const ExperimentConfig& cfg, NewtonFractalRun* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  const Complex w = detail::complex_param(p, "w");
  const auto r = get<std::vector<double>>(p, "region");
  const newton::Region region{r[0], r[1], r[2], r[3]};
  const int res = get<int>(p, "resolution");
  const double tol = get<double>(p, "tol");
  const int max_iter = get<int>(p, "max_iter");
  const auto cubic = newton::ComplexPolynomial::from_roots({-w, w, 1.0});
  NewtonFractalRun run;
  run.grid = newton::fractal_iteration_grid(cubic, region, res, tol, max_iter);
  run.coarse = newton::fractal_iteration_grid(cubic, region, res / 2, tol, max_iter);
  const auto fine_f = run.grid.basin_fractions(), coarse_f = run.coarse.basin_fractions();
  double min_fraction = 1.0, max_shift = 0.0;
  for (std::size_t i = 0; i < fine_f.size(); ++i) {
    min_fraction = std::min(min_fraction, fine_f[i]);
    max_shift = std::max(max_shift, std::abs(fine_f[i] - coarse_f[i]));
  }
  const int qres = get<int>(p, "quadratic_resolution");
  run.quadratic = newton::fractal_iteration_grid(newton::ComplexPolynomial({1.0, 0.0, 1.0}), region, qres, tol, max_iter);
  run.quadratic_boundary_exact = quadratic_boundary_is_real_axis(run.quadratic);

  out.checks.push_back(check_gt("smallest basin fraction", min_fraction, 0.0));
  out.checks.push_back(check_lt("basin fraction change under 2x refinement", max_shift, get<double>(p, "fraction_tol")));
  out.checks.push_back({"quadratic basin boundary is the real axis", run.quadratic_boundary_exact,
                        run.quadratic_boundary_exact ? 1.0 : 0.0, 1.0, "=="});
  Json fr = Json::array();
  for (std::size_t i = 0; i < fine_f.size(); ++i)
    fr.push_back({{"root", {run.grid.roots[i].real(), run.grid.roots[i].imag()}},
                  {"fraction", fine_f[i]},
                  {"fraction_coarse", coarse_f[i]}});
  out.summary = {{"basin_fractions", fr}, {"max_fraction_shift", max_shift}};
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(run);
  return out;
}

// ---------------------------------------------------------------------------
// window-scan

inline std::vector<analysis::Window> windows_from_params(const Json& p) {
  std::vector<analysis::Window> out;
  for (const auto& w : p.at("windows")) {
    const auto lo = detail::get<std::vector<double>>(w, "lower");
    const auto hi = detail::get<std::vector<double>>(w, "upper");
    out.push_back({StateVector{{lo[0], lo[1]}}, StateVector{{hi[0], hi[1]}}});
  }
  return out;
}

inline RunOutput run_window_scan(const ExperimentConfig& cfg, analysis::WindowScanResult* run_out = nullptr) {
  using detail::get;
  const Json& p = cfg.params;
  RunOutput out;
  Stopwatch total;
  const auto f = std::make_shared<systems::Quartic>();
  const systems::GradientDescent gd(f, get<double>(p, "step_size"));
  dictionary::DictionaryConfig dc;
  dc.n_rbf = get<int>(p, "n_rbf");
  dc.delta = get<double>(p, "delta");
  dc.seed = derive_seed(cfg.seed, kDictionary);
  const std::uint64_t s_sampling = derive_seed(cfg.seed, kSampling);
  out.seeds = {{"sampling", s_sampling}, {"dictionary", dc.seed}};
  auto result = analysis::window_spectrum_scan(gd, windows_from_params(p), dc, get<std::size_t>(p, "n_samples"),
                                               s_sampling, fit_options(cfg.fit_mode));
  const double tol = get<double>(p, "tolerance");
  Json per = Json::array();
  std::size_t i = 0;
  for (const auto& w : p.at("windows")) {
    const auto& rec = result.windows[i++];
    const std::string name = w.at("name").get<std::string>();
    const double excess = rec.ok ? rec.max_re_lambda - 1.0 : std::nan("");
    if (w.at("expect").get<std::string>() == "inside")
      out.checks.push_back(check_le("window " + name + ": max Re lambda - 1", excess, tol));
    else
      out.checks.push_back(check_gt("window " + name + ": max Re lambda - 1", excess, 0.0));
    per.push_back({{"name", name}, {"max_re_lambda_minus_1", excess}, {"ok", rec.ok}, {"error", rec.error}});
  }
  out.summary["windows"] = per;
  out.timings["total_seconds"] = total.seconds();
  if (run_out) *run_out = std::move(result);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact writing

namespace detail {

inline void write_trajectories(const fs::path& path, const std::vector<PointSet>& predicted,
                               const std::vector<PointSet>& truth) {
  if (predicted.empty()) return;
  const Eigen::Index d = predicted.front().cols();
  std::vector<std::string> header{"start", "step"};
  for (Eigen::Index j = 0; j < d; ++j) header.push_back("pred_x" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < d; ++j) header.push_back("true_x" + std::to_string(j + 1));
  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < predicted.size(); ++s)
    for (Eigen::Index m = 0; m < predicted[s].rows(); ++m) {
      std::vector<double> row{static_cast<double>(s), static_cast<double>(m)};
      for (Eigen::Index j = 0; j < d; ++j) row.push_back(predicted[s](m, j));
      for (Eigen::Index j = 0; j < d; ++j) row.push_back(truth[s](m, j));
      rows.push_back(std::move(row));
    }
  io::write_csv(path, header, rows);
}

}  // namespace detail

/// Runs the configured pipeline and writes its artifacts under `out_dir`.
inline RunOutput execute(const ExperimentConfig& cfg, const fs::path& out_dir) {
  validate(cfg);
  fs::create_directories(out_dir);
  const std::string& e = cfg.experiment;
  RunOutput out;
  auto add = [&](const std::string& f) { out.files.push_back(f); };
  if (e == "euler-spectrum") {
    std::vector<EulerRow> rows;
    out = run_euler_spectrum(cfg, &rows);
    RealMatrix t(static_cast<Eigen::Index>(rows.size()), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      t(static_cast<Eigen::Index>(i), 0) = rows[i].a_dt;
      t(static_cast<Eigen::Index>(i), 1) = rows[i].max_abs;
    }
    io::write_csv(out_dir / "euler_spectrum.csv", {"a_dt", "max_abs_lambda"}, t);
    add("euler_spectrum.csv");
  } else if (e == "himmelblau") {
    HimmelblauRun run;
    out = run_himmelblau(cfg, &run);
    edmd::write_eigenvalues_csv(out_dir / "eigenvalues.csv", run.model.eigenvalues);
    add("eigenvalues.csv");
    for (const auto& f : edmd::save_model(run.model, out_dir / "model")) add("model/" + f);
    if (!run.decomposition.labels.empty()) {
      analysis::write_decomposition_csv(out_dir / "decomposition.csv", run.decomposition_points, run.decomposition.labels);
      add("decomposition.csv");
    }
    detail::write_trajectories(out_dir / "predictions.csv", run.predictions, run.true_trajectories);
    add("predictions.csv");
  } else if (e == "nesterov-generator") {
    NesterovRun run;
    out = run_nesterov_generator(cfg, &run);
    edmd::write_eigenvalues_csv(out_dir / "eigenvalues.csv", run.model.eigenvalues);
    generator::write_generator_eigs_csv(out_dir / "generator_eigs.csv", run.gen);
    RealMatrix t(run.eval_points.rows(), 9);
    t << run.eval_points, run.field, run.reference;
    io::write_csv(out_dir / "vector_field.csv",
                  {"x", "v", "t", "dx_model", "dv_model", "dt_model", "dx_ode", "dv_ode", "dt_ode"}, t);
    for (const auto& f : {"eigenvalues.csv", "generator_eigs.csv", "vector_field.csv"}) add(f);
  } else if (e == "muellerbrown-100d") {
    MuellerBrownRun run;
    out = run_muellerbrown(cfg, &run);
    edmd::write_eigenvalues_csv(out_dir / "eigenvalues.csv", run.model.eigenvalues);
    RealMatrix t(run.coordinate_error.size(), 2);
    for (Eigen::Index j = 0; j < t.rows(); ++j) {
      t(j, 0) = static_cast<double>(j + 1);
      t(j, 1) = run.coordinate_error(j);
    }
    io::write_csv(out_dir / "coordinate_errors.csv", {"coordinate", "mean_error_over_range"}, t);
    detail::write_trajectories(out_dir / "predictions.csv", run.predictions, run.true_trajectories);
    for (const auto& f : {"eigenvalues.csv", "coordinate_errors.csv", "predictions.csv"}) add(f);
  } else if (e == "newton-eigen") {
    NewtonEigenRun run;
    out = run_newton_eigen(cfg, &run);
    std::vector<std::vector<double>> rows;
    for (const auto& r : run.eigen_rows)
      rows.push_back({r.z.real(), r.z.imag(), static_cast<double>(r.k), r.psi, r.psi_next, r.rel_error});
    io::write_csv(out_dir / "eigenfunction_checks.csv", {"re_z", "im_z", "k", "psi", "psi_next", "rel_error"}, rows);
    rows.clear();
    for (std::size_t n = 0; n < run.closed_form.size(); ++n)
      rows.push_back({static_cast<double>(n), run.closed_form[n], run.direct[n]});
    io::write_csv(out_dir / "closed_form.csv", {"n", "closed_form", "direct"}, rows);
    rows.clear();
    for (std::size_t b = 0; b < run.bin_counts.size(); ++b)
      rows.push_back({run.bin_edges[b], run.bin_edges[b + 1], static_cast<double>(run.bin_counts[b]),
                      static_cast<double>(run.bin_counts[b]) / run.histogram_total, run.bin_probability[b]});
    io::write_csv(out_dir / "histogram.csv", {"lower", "upper", "count", "fraction", "cauchy_mass"}, rows);
    for (const auto& f : {"eigenfunction_checks.csv", "closed_form.csv", "histogram.csv"}) add(f);
  } else if (e == "newton-spectrum") {
    NewtonSpectrumRun run;
    out = run_newton_spectrum(cfg, &run);
    spectral::write_density_csv(out_dir / "density.csv", run.density);
    spectral::write_moments_csv(out_dir / "moments.csv", run.moments);
    add("density.csv");
    add("moments.csv");
  } else if (e == "newton-fractal") {
    NewtonFractalRun run;
    out = run_newton_fractal(cfg, &run);
    newton::write_fractal_csv(out_dir / "fractal.csv", run.grid);
    newton::write_fractal_pgm(out_dir / "fractal.pgm", run.grid);
    newton::write_fractal_ppm(out_dir / "fractal.ppm", run.grid);
    newton::write_fractal_ppm(out_dir / "quadratic.ppm", run.quadratic);
    for (const auto& f : {"fractal.csv", "fractal.pgm", "fractal.ppm", "quadratic.ppm"}) add(f);
  } else if (e == "window-scan") {
    analysis::WindowScanResult result;
    out = run_window_scan(cfg, &result);
    analysis::write_window_scan_csv(out_dir / "window_scan.csv", result);
    add("window_scan.csv");
    for (std::size_t w = 0; w < result.windows.size(); ++w) {
      if (!result.windows[w].ok) continue;
      const std::string name = "window_" + cfg.params.at("windows")[w].at("name").get<std::string>() + "_eigenvalues.csv";
      edmd::write_eigenvalues_csv(out_dir / name, result.windows[w].eigenvalues);
      add(name);
    }
  } else {
    throw ConfigError("unknown experiment '" + e + "'");
  }
  return out;
}

/// Full run: artifacts, the resolved config and manifest.json.
inline RunOutput run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  Stopwatch wall;
  RunOutput out = execute(cfg, out_dir);
  io::write_json(out_dir / "config.json", cfg.to_json());
  out.files.push_back("config.json");
  io::Manifest manifest(cfg.experiment);
  for (const auto& f : out.files) manifest.add_file(out_dir, f);
  manifest.seeds() = out.seeds;
  manifest.seeds()["master"] = cfg.seed;
  manifest.residuals() = out.residuals;
  manifest.timings() = out.timings;
  manifest.timings()["wall_seconds"] = wall.seconds();
  manifest.extra() = {{"fit_mode", edmd::fit_mode_name(cfg.fit_mode)},
                      {"summary", out.summary},
                      {"checks", checks_json(out.checks)},
                      {"passed", out.passed()}};
  manifest.write(out_dir / "manifest.json");
  return out;
}

}  // namespace koopkit::experiments
