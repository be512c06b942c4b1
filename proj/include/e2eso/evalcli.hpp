#pragma once
// Experiment drivers behind the command line front end: configuration
// parsing with per-experiment defaults, dataset plumbing, the four
// benchmark experiments (posterior-mean regression, newsvendor under
// ambiguity, the projection pathology, economic dispatch), and the
// on-disk output contract (CDF tables, decision logs, summary and run
// manifest JSON).

#include <e2eso/common.hpp>
#include <e2eso/decisions.hpp>
#include <e2eso/nnet.hpp>
#include <e2eso/rng.hpp>
#include <e2eso/scenarios.hpp>
#include <e2eso/solvers.hpp>
#include <e2eso/training.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace e2eso::evalcli {

using nlohmann::json;

// ----------------------------------------------------------------------
// Run configuration
// ----------------------------------------------------------------------

/// Optimizer and sampling budget for one training run. "adam" keeps a
/// constant base rate; "sgd_sqrt" and "adam_sqrt" decay the step as
/// eta0 / sqrt(k), so their stationary noise floor vanishes.
struct TrainSettings {
    std::uint64_t total_samples = 1;
    std::size_t batch = 1;
    std::vector<std::size_t> hidden;
    double eta0 = 1e-3;
    std::string optimizer = "adam";
    std::size_t iterate_target = 1000;
};

inline nnet::OptimState make_optimizer(const TrainSettings& t) {
    if (t.optimizer == "adam")
        return nnet::OptimState::adam(t.eta0);
    if (t.optimizer == "adam_sqrt")
        return nnet::OptimState::adam_sqrt(t.eta0);
    if (t.optimizer == "sgd_sqrt")
        return nnet::OptimState::sgd(t.eta0);
    throw ConfigError("unknown optimizer: " + t.optimizer +
                      " (use adam, adam_sqrt, or sgd_sqrt)");
}

/// Parsed and validated invocation: experiment name, seeds, scale, data
/// source, and the raw JSON blocks whose keys are resolved lazily by the
/// experiment that understands them.
struct RunConfig {
    std::string experiment;
    std::uint64_t seed = 42;
    double eps = 0.025;
    bool paper_scale = false;
    std::string out_dir = "out";
    std::string data_source = "synthetic";  ///< "synthetic" or "csv:<path>"
    int replications = 5;
    std::size_t test_draws = 0;  ///< 0 selects the per-scale default
    std::vector<int> frequencies = {10, 30, 60};
    std::vector<std::string> observations = {"myopic", "myopic_incomplete", "historical"};
    std::vector<std::string> strategies;  ///< empty selects every registered one
    scenarios::ColumnMap column_map;
    json training_overrides = json::object();
    json scenario_overrides = json::object();
    json raw = json::object();  ///< the config as given, echoed in the manifest

    bool wants(const std::string& strategy) const {
        return strategies.empty() ||
               std::find(strategies.begin(), strategies.end(), strategy) != strategies.end();
    }
};

inline const std::vector<std::string>& registered_experiments() {
    static const std::vector<std::string> names{"mean-est", "newsvendor", "grad-proj",
                                                "dispatch"};
    return names;
}

/// Strategy identifiers per experiment, in their canonical (seeding and
/// reporting) order.
inline const std::vector<std::string>& registered_strategies(const std::string& experiment) {
    static const std::vector<std::string> mean_est{"nn", "erm", "mmse"};
    static const std::vector<std::string> newsvendor{"nn_bay", "nn_erm", "nn_dro", "bay",
                                                     "erm",    "dro",    "true"};
    static const std::vector<std::string> grad_proj{"outside", "inside"};
    static const std::vector<std::string> dispatch{"oracle",  "lag1",
                                                   "mle",     "e2e_cal",
                                                   "e2e_opl_softplus", "e2e_opl_relu"};
    if (experiment == "mean-est")
        return mean_est;
    if (experiment == "newsvendor")
        return newsvendor;
    if (experiment == "grad-proj")
        return grad_proj;
    if (experiment == "dispatch")
        return dispatch;
    throw ConfigError("unknown experiment: " + experiment);
}

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void require_known_keys(const json& j, const std::vector<std::string>& allowed,
                               const std::string& context) {
    if (!j.is_object())
        throw ConfigError(context + ": expected a JSON object");
    for (const auto& item : j.items())
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            throw ConfigError(context + ": unknown key '" + item.key() + "'");
}

}  // namespace detail

/**
 * Parses a JSON configuration against the experiment named on the command
 * line. Unknown top-level keys, unknown strategy names, malformed data
 * sources, and out-of-range scalars are configuration errors; nothing here
 * touches the data itself.
 */
inline RunConfig parse_run_config(const json& j, const std::string& experiment) {
    const auto& experiments = registered_experiments();
    if (std::find(experiments.begin(), experiments.end(), experiment) == experiments.end())
        throw ConfigError("unknown experiment: " + experiment + " (use mean-est, newsvendor, "
                          "grad-proj, or dispatch)");
    detail::require_known_keys(
        j,
        {"experiment", "seed", "eps", "paper_scale", "out_dir", "data", "replications",
         "test_draws", "frequencies", "observations", "strategies", "column_map", "training",
         "scenario"},
        "config");

    RunConfig cfg;
    cfg.experiment = experiment;
    cfg.raw = j;
    const std::string from_file = detail::get_or<std::string>(j, "experiment", experiment);
    if (from_file != experiment)
        throw ConfigError("config names experiment '" + from_file +
                          "' but the command line asked for '" + experiment + "'");
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.eps = detail::get_or<double>(j, "eps", cfg.eps);
    if (!(cfg.eps >= 0.0))
        throw ConfigError("eps must be nonnegative");
    cfg.paper_scale = detail::get_or<bool>(j, "paper_scale", cfg.paper_scale);
    cfg.out_dir = detail::get_or<std::string>(j, "out_dir", cfg.out_dir);
    cfg.data_source = detail::get_or<std::string>(j, "data", cfg.data_source);
    if (cfg.data_source != "synthetic" && cfg.data_source.rfind("csv:", 0) != 0)
        throw ConfigError("data must be 'synthetic' or 'csv:<path>'");
    cfg.replications = detail::get_or<int>(j, "replications", cfg.replications);
    if (cfg.replications < 1)
        throw ConfigError("replications must be positive");
    cfg.test_draws = detail::get_or<std::size_t>(j, "test_draws", cfg.test_draws);
    cfg.frequencies = detail::get_or<std::vector<int>>(j, "frequencies", cfg.frequencies);
    if (cfg.frequencies.empty())
        throw ConfigError("frequencies must not be empty");
    for (int f : cfg.frequencies)
        if (f != 10 && f != 30 && f != 60)
            throw ConfigError("frequencies must be chosen from {10, 30, 60}");
    cfg.observations =
        detail::get_or<std::vector<std::string>>(j, "observations", cfg.observations);
    if (cfg.observations.empty())
        throw ConfigError("observations must not be empty");
    for (const std::string& name : cfg.observations)
        if (name != "myopic" && name != "myopic_incomplete" && name != "historical")
            throw ConfigError("observations must be chosen from {myopic, myopic_incomplete, "
                              "historical}");
    cfg.strategies = detail::get_or<std::vector<std::string>>(j, "strategies", cfg.strategies);
    const auto& registry = registered_strategies(experiment);
    for (const std::string& s : cfg.strategies)
        if (std::find(registry.begin(), registry.end(), s) == registry.end())
            throw ConfigError("unknown strategy '" + s + "' for experiment " + experiment);
    if ((experiment == "mean-est" || experiment == "grad-proj") && !cfg.strategies.empty() &&
        cfg.strategies.size() != registry.size())
        throw ConfigError("strategy selection is not supported for " + experiment +
                          "; its outputs are columns of one protocol");
    if (j.contains("column_map")) {
        try {
            cfg.column_map = scenarios::column_map_from_json(j.at("column_map"));
        } catch (const FormatError& e) {
            // A malformed map is a configuration mistake; format errors are
            // reserved for the data files themselves.
            throw ConfigError(std::string("column_map: ") + e.what());
        }
    }
    cfg.training_overrides = detail::get_or<json>(j, "training", cfg.training_overrides);
    cfg.scenario_overrides = detail::get_or<json>(j, "scenario", cfg.scenario_overrides);
    detail::require_known_keys(cfg.training_overrides,
                               {"total_samples", "batch", "hidden", "eta0", "optimizer",
                                "iterate_target"},
                               "training");
    return cfg;
}

/// Per-experiment training defaults. Desk scale finishes on one core in
/// minutes; the large-scale profile uses the full sampling budgets.
inline TrainSettings resolve_training(const RunConfig& cfg) {
    TrainSettings t;
    if (cfg.experiment == "mean-est") {
        // Small batches buy more optimizer steps out of the reduced desk
        // budget; the calibration slope needs them to reach its asymptote.
        t = {200000, 5, {64, 64}, 1e-3, "adam", 1000};
        if (cfg.paper_scale)
            t = {5000000, 100, {500, 500}, 1e-3, "adam", 1000};
    } else if (cfg.experiment == "newsvendor") {
        t = {200000, 200, {64, 64}, 1e-3, "adam", 1000};
        if (cfg.paper_scale)
            t = {5000000, 5000, {64, 64}, 1e-3, "adam", 1000};
    } else if (cfg.experiment == "grad-proj") {
        t = {20000, 1, {}, 0.05, "sgd_sqrt", 1000};
    } else if (cfg.experiment == "dispatch") {
        t = {200000, 100, {64}, 1e-3, "adam", 1000};
        if (cfg.paper_scale)
            t = {600000, 100, {64}, 1e-3, "adam", 1000};
    } else {
        throw ConfigError("unknown experiment: " + cfg.experiment);
    }
    const json& o = cfg.training_overrides;
    t.total_samples = detail::get_or<std::uint64_t>(o, "total_samples", t.total_samples);
    t.batch = detail::get_or<std::size_t>(o, "batch", t.batch);
    t.hidden = detail::get_or<std::vector<std::size_t>>(o, "hidden", t.hidden);
    t.eta0 = detail::get_or<double>(o, "eta0", t.eta0);
    t.optimizer = detail::get_or<std::string>(o, "optimizer", t.optimizer);
    t.iterate_target = detail::get_or<std::size_t>(o, "iterate_target", t.iterate_target);
    if (t.total_samples < 1 || t.batch < 1 || t.iterate_target < 1)
        throw ConfigError("training: total_samples, batch, iterate_target must be positive");
    if (!(t.eta0 > 0.0))
        throw ConfigError("training: eta0 must be positive");
    make_optimizer(t);  // validates the optimizer name
    return t;
}

inline std::size_t default_test_draws(const RunConfig& cfg) {
    if (cfg.test_draws > 0)
        return cfg.test_draws;
    if (cfg.experiment == "mean-est")
        return 5000;
    if (cfg.experiment == "newsvendor")
        return cfg.paper_scale ? 10000 : 2000;
    return 1000;
}

// ----------------------------------------------------------------------
// Report container and output emission
// ----------------------------------------------------------------------

/**
 * One experiment's deliverables. The summary carries only values that are
 * a pure function of the configuration and seed, so a rerun reproduces it
 * byte for byte; wall-clock and timestamps live in the manifest.
 */
struct EvalReport {
    json summary = json::object();
    std::map<std::string, Vec> cdfs;  ///< strategy tag -> realized values
    std::vector<std::string> decision_columns;
    std::vector<std::vector<std::string>> decision_rows;
    json manifest = json::object();
};

namespace detail {

/// Shortest round-trip decimal form, identical to the JSON encoding so
/// CSV and summary agree on every digit.
inline std::string cell(double v) { return json(v).dump(); }
template <std::integral T>
std::string cell(T v) {
    return std::to_string(v);
}

inline std::string read_git_commit() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::path dir = fs::current_path(ec);
    if (ec)
        return "unknown";
    for (;;) {
        const fs::path head_path = dir / ".git" / "HEAD";
        if (fs::exists(head_path, ec)) {
            std::ifstream head(head_path);
            std::string line;
            if (head && std::getline(head, line)) {
                if (line.rfind("ref: ", 0) == 0) {
                    std::ifstream ref(dir / ".git" / line.substr(5));
                    std::string hash;
                    if (ref && std::getline(ref, hash) && !hash.empty())
                        return hash;
                } else if (!line.empty()) {
                    return line;
                }
            }
            return "unknown";
        }
        if (!dir.has_parent_path() || dir.parent_path() == dir)
            return "unknown";
        dir = dir.parent_path();
    }
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

/// Empirical CDF table: a zero-probability anchor at the minimum, then one
/// row per sorted sample with cumulative probability (i+1)/n ending at 1.
inline void write_cdf_csv(const std::string& path, const Vec& values) {
    if (values.empty())
        throw ContractError("write_cdf_csv: no values for " + path);
    Vec sorted(values);
    std::sort(sorted.begin(), sorted.end());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << "value,cum_prob\n";
    out << detail::cell(sorted.front()) << ",0.0\n";
    const double n = static_cast<double>(sorted.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double cum = static_cast<double>(i + 1) / n;
        if (cum < prev)
            throw ContractError("write_cdf_csv: cumulative probability decreased");
        prev = cum;
        out << detail::cell(sorted[i]) << "," << detail::cell(cum) << "\n";
    }
    if (prev != 1.0)
        throw ContractError("write_cdf_csv: cumulative probability must end at 1");
}

/**
 * Writes the report under dir: cdf_<strategy>.csv per CDF series,
 * decisions.csv when decision rows exist, summary.json (deterministic),
 * and run_manifest.json (manifest plus the list of files written).
 */
inline void emit_outputs(const EvalReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create output directory " + dir + ": " + ec.message());

    std::vector<std::string> files;
    for (const auto& [tag, values] : report.cdfs) {
        const std::string name = "cdf_" + tag + ".csv";
        write_cdf_csv(dir + "/" + name, values);
        files.push_back(name);
    }
    if (!report.decision_columns.empty()) {
        std::ofstream out(dir + "/decisions.csv");
        if (!out)
            throw IoError("cannot write " + dir + "/decisions.csv");
        for (std::size_t i = 0; i < report.decision_columns.size(); ++i)
            out << (i ? "," : "") << report.decision_columns[i];
        out << "\n";
        for (const auto& row : report.decision_rows) {
            if (row.size() != report.decision_columns.size())
                throw ContractError("emit_outputs: decision row width mismatch");
            for (std::size_t i = 0; i < row.size(); ++i)
                out << (i ? "," : "") << row[i];
            out << "\n";
        }
        files.push_back("decisions.csv");
    }
    {
        std::ofstream out(dir + "/summary.json");
        if (!out)
            throw IoError("cannot write " + dir + "/summary.json");
        out << report.summary.dump(2) << "\n";
        files.push_back("summary.json");
    }
    {
        json manifest = report.manifest;
        std::sort(files.begin(), files.end());
        manifest["files"] = files;
        std::ofstream out(dir + "/run_manifest.json");
        if (!out)
            throw IoError("cannot write " + dir + "/run_manifest.json");
        out << manifest.dump(2) << "\n";
    }
}

namespace detail {

inline json base_manifest(const RunConfig& cfg, const TrainSettings& t, double wall_seconds) {
    json m;
    m["format"] = "e2eso-run-manifest-v1";
    m["experiment"] = cfg.experiment;
    m["seed"] = cfg.seed;
    m["eps"] = cfg.eps;
    m["paper_scale"] = cfg.paper_scale;
    m["data"] = cfg.data_source;
    m["out_dir"] = cfg.out_dir;
    m["config"] = cfg.raw;
    m["resolved_training"] = {{"total_samples", t.total_samples},
                              {"batch", t.batch},
                              {"hidden", t.hidden},
                              {"eta0", t.eta0},
                              {"optimizer", t.optimizer},
                              {"iterate_target", t.iterate_target}};
    m["git_commit"] = read_git_commit();
    m["created_utc"] = utc_timestamp();
    m["wall_clock_seconds"] = wall_seconds;
    return m;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

/// Ordinary least squares of y on x: slope and intercept.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit ols_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw DomainError("ols_fit: need two equal-length samples");
    const double mx = mean(x);
    const double my = mean(y);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0))
        throw DomainError("ols_fit: regressor has no variance");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

inline double rmse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw DomainError("rmse: need two equal-length samples");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc / static_cast<double>(a.size()));
}

inline double standard_error(std::span<const double> a) {
    if (a.empty())
        return 0.0;
    return stddev(a) / std::sqrt(static_cast<double>(a.size()));
}

/// Gaussian elimination with partial pivoting; a is consumed.
inline Vec solve_linear_system(Matrix a, Vec b) {
    const std::size_t n = a.rows;
    if (a.cols != n || b.size() != n)
        throw DomainError("solve_linear_system: need a square system");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col)))
                pivot = r;
        if (std::abs(a(pivot, col)) < 1e-12)
            throw DomainError("solve_linear_system: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c)
                std::swap(a(pivot, c), a(col, c));
            std::swap(b[pivot], b[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a(r, col) / a(col, col);
            if (factor == 0.0)
                continue;
            for (std::size_t c = col; c < n; ++c)
                a(r, c) -= factor * a(col, c);
            b[r] -= factor * b[col];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c)
            acc -= a(i, c) * x[c];
        x[i] = acc / a(i, i);
    }
    return x;
}

/// Least-squares regression of y on [x, 1] via ridge-stabilized normal
/// equations; returns the coefficient vector with the intercept last.
inline Vec least_squares_fit(const std::vector<scenarios::ObservationRow>& rows) {
    if (rows.empty())
        throw DomainError("least_squares_fit: no rows");
    const std::size_t d = rows.front().x.size() + 1;
    Matrix gram(d, d);
    Vec moment(d, 0.0);
    Vec z(d, 1.0);
    for (const auto& row : rows) {
        std::copy(row.x.begin(), row.x.end(), z.begin());
        z[d - 1] = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            moment[i] += z[i] * row.y;
            for (std::size_t j = 0; j < d; ++j)
                gram(i, j) += z[i] * z[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        gram(i, i) += 1e-8;
    return solve_linear_system(std::move(gram), std::move(moment));
}

inline double least_squares_predict(const Vec& theta, const Vec& x) {
    if (theta.size() != x.size() + 1)
        throw DomainError("least_squares_predict: coefficient length mismatch");
    double acc = theta.back();
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += theta[i] * x[i];
    return acc;
}

inline std::vector<nnet::Activation> relu_stack(std::size_t hidden_layers,
                                                nnet::Activation output) {
    std::vector<nnet::Activation> acts(hidden_layers, nnet::Activation::relu);
    acts.push_back(output);
    return acts;
}

inline std::vector<std::size_t> layer_dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                           std::size_t out) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(out);
    return dims;
}

inline json train_digest(const training::TrainReport& rep) {
    // Mean objective over the trailing tenth of the loss curve: a stable,
    // deterministic convergence indicator.
    const std::size_t n = rep.loss_curve.size();
    const std::size_t tail = std::max<std::size_t>(1, n / 10);
    double acc = 0.0;
    for (std::size_t i = n - tail; i < n; ++i)
        acc += rep.loss_curve[i];
    return json{{"iterations", rep.iterations},
                {"samples", rep.samples_consumed},
                {"final_loss", acc / static_cast<double>(tail)}};
}

}  // namespace detail

// ----------------------------------------------------------------------
// Scenario adapters
// ----------------------------------------------------------------------

/// (X, Y) pairs from the Gaussian hierarchy; features are the raw samples.
struct GaussianPairs {
    const scenarios::GaussianSampler* sampler;
    training::PairSample draw_pair(std::uint64_t k) const {
        const scenarios::GaussianDraw d = sampler->draw(k);
        return {d.x, d.y};
    }
};

/// (histogram(X), Y) pairs from the newsvendor hierarchy.
struct NewsvendorPairs {
    const scenarios::NewsvendorSampler* sampler;
    training::PairSample draw_pair(std::uint64_t k) const {
        const scenarios::NewsvendorDraw d = sampler->draw(k);
        return {scenarios::level_histogram(d.x, sampler->levels()),
                static_cast<double>(d.y)};
    }
};

/// Observations only: the demand history doubles as the outcome pool and
/// the fresh-outcome stream is never touched.
struct NewsvendorOutcomes {
    const scenarios::NewsvendorSampler* sampler;
    training::OutcomeSample draw_outcomes(std::uint64_t k) const {
        const Vec z = sampler->draw_z(k);
        const std::vector<int> x = sampler->draw_x(k, z);
        Vec outcomes(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            outcomes[i] = static_cast<double>(x[i]);
        return {scenarios::level_histogram(x, sampler->levels()), std::move(outcomes)};
    }
};

/// Uniform-with-replacement resampling of a fixed supervised row set,
/// standardized through the scaler fit on the training split.
struct DatasetPairs {
    const std::vector<scenarios::ObservationRow>* rows;
    const scenarios::FeatureScaler* scaler;
    std::uint64_t seed;
    training::PairSample draw_pair(std::uint64_t k) const {
        const std::size_t i = Rng::at(seed, 0, k).uniform_index(rows->size());
        const scenarios::ObservationRow& row = (*rows)[i];
        return {scaler->apply(row.x), row.y};
    }
};

// ----------------------------------------------------------------------
// Experiment: posterior-mean regression (mean-est)
// ----------------------------------------------------------------------

/**
 * Trains a network on fresh (X, Y) pairs under squared loss and probes it
 * on observations drawn at equidistant latent means, against the exact
 * posterior mean and the per-observation sample mean. The fit statistics
 * quantify how closely loss-gradient training recovers the posterior mean
 * map, and the shrinkage means show the prior pulling predictions toward
 * it from both sides.
 */
inline EvalReport run_mean_est(const RunConfig& cfg) {
    const detail::Stopwatch clock;
    const TrainSettings ts = resolve_training(cfg);
    detail::require_known_keys(
        cfg.scenario_overrides,
        {"mean_prior", "var_prior", "var_obs", "num_samples", "z_max"}, "scenario");
    solvers::GaussianHierarchy h;
    h.mean_prior = detail::get_or<double>(cfg.scenario_overrides, "mean_prior", 2.0);
    h.var_prior = detail::get_or<double>(cfg.scenario_overrides, "var_prior", 0.25);
    h.var_obs = detail::get_or<double>(cfg.scenario_overrides, "var_obs", 4.0);
    h.num_samples = detail::get_or<int>(cfg.scenario_overrides, "num_samples", 20);
    solvers::validate(h);
    const double z_max = detail::get_or<double>(cfg.scenario_overrides, "z_max", 5.0);
    if (!(z_max > 0.0))
        throw ConfigError("scenario: z_max must be positive");

    const std::size_t in_dim = static_cast<std::size_t>(h.num_samples);
    nnet::Mlp net = nnet::init_weights(detail::layer_dims(in_dim, ts.hidden, 1),
                                       detail::relu_stack(ts.hidden.size(),
                                                          nnet::Activation::linear),
                                       cfg.seed + 1);
    training::DecisionMap map(std::move(net), decisions::Prescriptor::identity(1));
    const scenarios::GaussianSampler sampler(h, cfg.seed);
    const GaussianPairs pairs{&sampler};
    auto loss = [](double y, std::span<const double> a) {
        const Vec target{y};
        return decisions::squared_loss(target, a);
    };
    training::TrainOptions options;
    options.total_samples = ts.total_samples;
    options.batch = ts.batch;
    options.iterate_target = ts.iterate_target;
    options.selection_seed = cfg.seed + 2;
    const training::TrainReport rep =
        training::train_bayes(map, pairs, loss, make_optimizer(ts), options);

    // Probe protocol: equidistant latent means, one fresh observation each.
    const std::size_t n = default_test_draws(cfg);
    if (n < 2)
        throw ConfigError("test_draws: need at least two probe points");
    const scenarios::GaussianSampler probe(h, cfg.seed + 777);
    Vec zs(n), mu_nn(n), mu_erm(n), mu_mmse(n);
    Vec err_nn(n), err_erm(n), err_mmse(n);
    EvalReport report;
    report.decision_columns = {"z", "mu_nn", "mu_erm", "mu_mmse"};
    for (std::size_t i = 0; i < n; ++i) {
        const double z = z_max * static_cast<double>(i) / static_cast<double>(n - 1);
        const Vec x = probe.draw_x(i, z);
        zs[i] = z;
        mu_nn[i] = map.decide(x)[0];
        mu_erm[i] = mean(x);
        mu_mmse[i] = solvers::gaussian_posterior(h, x).mean;
        err_nn[i] = std::abs(mu_nn[i] - z);
        err_erm[i] = std::abs(mu_erm[i] - z);
        err_mmse[i] = std::abs(mu_mmse[i] - z);
        report.decision_rows.push_back({detail::cell(z), detail::cell(mu_nn[i]),
                                        detail::cell(mu_erm[i]), detail::cell(mu_mmse[i])});
    }
    const detail::LineFit fit_mmse = detail::ols_fit(mu_mmse, mu_nn);
    const detail::LineFit fit_erm = detail::ols_fit(mu_erm, mu_nn);

    // Shrinkage: below the prior mean the posterior pulls the sample mean
    // up, above it down; the network should inherit both signs.
    double shrink_low = 0.0, shrink_high = 0.0;
    std::size_t n_low = 0, n_high = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (zs[i] < h.mean_prior) {
            shrink_low += mu_nn[i] - mu_erm[i];
            ++n_low;
        } else if (zs[i] > h.mean_prior) {
            shrink_high += mu_nn[i] - mu_erm[i];
            ++n_high;
        }
    }
    if (n_low == 0 || n_high == 0)
        throw ConfigError("test_draws: probe grid must straddle the prior mean");
    shrink_low /= static_cast<double>(n_low);
    shrink_high /= static_cast<double>(n_high);

    report.cdfs["nn"] = err_nn;
    report.cdfs["erm"] = err_erm;
    report.cdfs["mmse"] = err_mmse;
    report.summary = {
        {"experiment", cfg.experiment},
        {"seed", cfg.seed},
        {"test_draws", n},
        {"z_max", z_max},
        {"train", detail::train_digest(rep)},
        {"fit",
         {{"slope_mmse", fit_mmse.slope},
          {"intercept_mmse", fit_mmse.intercept},
          {"slope_erm", fit_erm.slope},
          {"intercept_erm", fit_erm.intercept},
          {"rmse_nn_mmse", detail::rmse(mu_nn, mu_mmse)},
          {"rmse_nn_erm", detail::rmse(mu_nn, mu_erm)},
          {"shrink_low_mean", shrink_low},
          {"shrink_high_mean", shrink_high}}},
        {"abs_error_mean",
         {{"nn", mean(err_nn)}, {"erm", mean(err_erm)}, {"mmse", mean(err_mmse)}}}};
    report.manifest = detail::base_manifest(cfg, ts, clock.seconds());
    return report;
}

// ----------------------------------------------------------------------
// Experiment: newsvendor under ambiguity
// ----------------------------------------------------------------------

namespace detail {

inline solvers::DirichletPrior newsvendor_test_prior(const std::string& tag, int levels) {
    solvers::DirichletPrior prior = solvers::DirichletPrior::uniform(levels);
    if (tag == "correct")
        return prior;
    const int low = levels / 2;  // five of eleven levels count as "low"
    if (tag == "shift_high") {
        for (int i = 0; i < levels; ++i)
            prior.alpha[static_cast<std::size_t>(i)] = i < low ? 0.1 : 2.0;
        return prior;
    }
    if (tag == "shift_low") {
        for (int i = 0; i < levels; ++i)
            prior.alpha[static_cast<std::size_t>(i)] = i < levels - low ? 2.0 : 0.1;
        return prior;
    }
    throw ConfigError("unknown test prior tag: " + tag);
}

/**
 * Prior for the decision-agreement comparison: light Dirichlet mass (0.5)
 * on the low demand levels, heavy mass (2.0) on the top four. Under the
 * uniform prior the exact strategies pick the same order on most draws,
 * so an agreement matrix is dominated by ties; this prior pushes their
 * decisions apart and makes the matrix informative.
 */
inline solvers::DirichletPrior newsvendor_agreement_prior(int levels) {
    if (levels < 5)
        throw ConfigError("agreement prior needs at least 5 demand levels");
    solvers::DirichletPrior prior = solvers::DirichletPrior::uniform(levels);
    for (int i = 0; i < levels; ++i)
        prior.alpha[static_cast<std::size_t>(i)] = i < levels - 4 ? 0.5 : 2.0;
    return prior;
}

}  // namespace detail

/**
 * Two-part study. Part one trains the three network strategies under the
 * uniform prior and evaluates profit (negated realized loss) next to the
 * four exact strategies on fresh test draws from the correct prior and
 * two shifted ones. Part two retrains the networks under a separating
 * prior and, on fresh draws from that same prior, counts how often each
 * network's argmax order matches each exact strategy; the resulting
 * agreement matrix should be largest on its diagonal.
 */
inline EvalReport run_newsvendor(const RunConfig& cfg) {
    const detail::Stopwatch clock;
    const TrainSettings ts = resolve_training(cfg);
    detail::require_known_keys(cfg.scenario_overrides,
                               {"levels", "observation_size", "group_size", "wholesale",
                                "retail"},
                               "scenario");
    decisions::NewsvendorParams params;
    params.levels = detail::get_or<int>(cfg.scenario_overrides, "levels", 11);
    params.wholesale = detail::get_or<double>(cfg.scenario_overrides, "wholesale", 5.0);
    params.retail = detail::get_or<double>(cfg.scenario_overrides, "retail", 7.0);
    decisions::validate(params);
    const std::size_t obs_n =
        detail::get_or<std::size_t>(cfg.scenario_overrides, "observation_size", 20);
    const std::size_t group =
        detail::get_or<std::size_t>(cfg.scenario_overrides, "group_size", 5);
    const std::size_t d = static_cast<std::size_t>(params.levels);

    auto loss = [&params](double y, std::span<const double> logits) {
        return decisions::newsvendor_softmax_loss(params, static_cast<int>(std::lround(y)),
                                                  logits);
    };
    const auto& registry = registered_strategies("newsvendor");
    auto strategy_seed = [&](const std::string& name) {
        const auto it = std::find(registry.begin(), registry.end(), name);
        const auto idx = static_cast<std::uint64_t>(it - registry.begin());
        return cfg.seed + 1000000ULL * (idx + 1);
    };
    auto make_map = [&](std::uint64_t seed) {
        nnet::Mlp net = nnet::init_weights(detail::layer_dims(d, ts.hidden, d),
                                           detail::relu_stack(ts.hidden.size(),
                                                              nnet::Activation::linear),
                                           seed + 1);
        return training::DecisionMap(std::move(net), decisions::Prescriptor::identity(d));
    };
    training::TrainOptions options;
    options.total_samples = ts.total_samples;
    options.batch = ts.batch;
    options.iterate_target = ts.iterate_target;

    const solvers::DirichletPrior train_prior = solvers::DirichletPrior::uniform(params.levels);
    std::map<std::string, training::DecisionMap> nets;
    json train_summaries = json::object();
    for (const std::string& name : {std::string("nn_bay"), std::string("nn_erm"),
                                    std::string("nn_dro")}) {
        if (!cfg.wants(name))
            continue;
        const std::uint64_t seed = strategy_seed(name);
        options.selection_seed = seed + 2;
        const scenarios::NewsvendorSampler sampler(train_prior, obs_n, seed, group);
        const auto it = nets.emplace(name, make_map(seed)).first;
        training::TrainReport rep = [&] {
            if (name == "nn_bay") {
                const NewsvendorPairs pairs{&sampler};
                return training::train_bayes(it->second, pairs, loss, make_optimizer(ts),
                                             options);
            }
            const NewsvendorOutcomes outcomes{&sampler};
            if (name == "nn_erm")
                return training::train_erm(it->second, outcomes, loss, make_optimizer(ts),
                                           options);
            return training::train_dro(it->second, outcomes, loss, cfg.eps, make_optimizer(ts),
                                       options);
        }();
        train_summaries[name] = detail::train_digest(rep);
    }

    // Evaluation: fresh independent draws from each test prior.
    const std::size_t n_test = default_test_draws(cfg);
    const std::vector<std::string> prior_tags{"correct", "shift_high", "shift_low"};
    EvalReport report;
    json profit_entries = json::array();

    for (std::size_t p_idx = 0; p_idx < prior_tags.size(); ++p_idx) {
        const std::string& tag = prior_tags[p_idx];
        const solvers::DirichletPrior test_prior =
            detail::newsvendor_test_prior(tag, params.levels);
        const scenarios::NewsvendorSampler sampler(test_prior, obs_n,
                                                   cfg.seed + 555 + p_idx, 1);
        std::map<std::string, Vec> profits;
        for (const std::string& name : registry)
            if (cfg.wants(name))
                profits[name].reserve(n_test);

        for (std::size_t k = 0; k < n_test; ++k) {
            const scenarios::NewsvendorDraw draw = sampler.draw(k);
            std::vector<int> counts(d, 0);
            for (int level : draw.x)
                ++counts[static_cast<std::size_t>(level - 1)];
            const Vec features = scenarios::level_histogram(draw.x, d);

            std::map<std::string, int> actions;
            if (cfg.wants("bay"))
                actions["bay"] = solvers::expected_loss_action(
                                     solvers::dirichlet_posterior_mean(train_prior, counts),
                                     params)
                                     .action;
            if (cfg.wants("erm"))
                actions["erm"] = solvers::erm_action(draw.x, params);
            if (cfg.wants("dro"))
                actions["dro"] = solvers::dro_action(draw.x, params, cfg.eps);
            if (cfg.wants("true"))
                actions["true"] = solvers::expected_loss_action(
                                      solvers::dirichlet_posterior_mean(test_prior, counts),
                                      params)
                                      .action;
            for (const auto& [name, map] : nets)
                actions[name] = decisions::argmax_level(map.decide(features));

            for (const auto& [name, action] : actions)
                profits[name].push_back(-decisions::newsvendor_loss(params, draw.y, action));

            if (tag == "correct") {
                if (report.decision_columns.empty()) {
                    report.decision_columns = {"index", "y"};
                    for (const std::string& name : registry)
                        if (actions.count(name))
                            report.decision_columns.push_back("a_" + name);
                }
                std::vector<std::string> row{detail::cell(k), detail::cell(draw.y)};
                for (const std::string& name : registry)
                    if (actions.count(name))
                        row.push_back(detail::cell(actions.at(name)));
                report.decision_rows.push_back(std::move(row));
            }
        }

        for (const std::string& name : registry) {
            if (!cfg.wants(name))
                continue;
            const Vec& v = profits.at(name);
            double tail = 0.0;
            for (double profit : v)
                if (profit <= 0.0)
                    tail += 1.0;
            profit_entries.push_back({{"strategy", name},
                                      {"prior", tag},
                                      {"mean", mean(v)},
                                      {"stderr", detail::standard_error(v)},
                                      {"n", v.size()},
                                      {"tail_mass_at_zero", tail / static_cast<double>(v.size())}});
            report.cdfs[name + "_" + tag] = v;
        }
    }

    // Decision-agreement comparison. The networks are retrained under the
    // separating prior and compared, on fresh draws from that same prior,
    // against the exact strategies computed draw by draw. Training and
    // test distributions match here by construction.
    json agreement = json::object();
    {
        const solvers::DirichletPrior ag_prior =
            detail::newsvendor_agreement_prior(params.levels);
        std::map<std::string, training::DecisionMap> ag_nets;
        for (const std::string& name : {std::string("nn_bay"), std::string("nn_erm"),
                                        std::string("nn_dro")}) {
            if (!cfg.wants(name))
                continue;
            const std::uint64_t seed = strategy_seed(name) + 10;
            options.selection_seed = seed + 2;
            const scenarios::NewsvendorSampler sampler(ag_prior, obs_n, seed, group);
            const auto it = ag_nets.emplace(name, make_map(seed)).first;
            training::TrainReport rep = [&] {
                if (name == "nn_bay") {
                    const NewsvendorPairs pairs{&sampler};
                    return training::train_bayes(it->second, pairs, loss, make_optimizer(ts),
                                                 options);
                }
                const NewsvendorOutcomes outcomes{&sampler};
                if (name == "nn_erm")
                    return training::train_erm(it->second, outcomes, loss, make_optimizer(ts),
                                               options);
                return training::train_dro(it->second, outcomes, loss, cfg.eps,
                                           make_optimizer(ts), options);
            }();
            train_summaries[name + "_agreement"] = detail::train_digest(rep);
        }
        if (!ag_nets.empty()) {
            const scenarios::NewsvendorSampler sampler(ag_prior, obs_n,
                                                       cfg.seed + 555 + prior_tags.size(), 1);
            std::map<std::string, std::map<std::string, std::size_t>> agree_counts;
            for (std::size_t k = 0; k < n_test; ++k) {
                const scenarios::NewsvendorDraw draw = sampler.draw(k);
                std::vector<int> counts(d, 0);
                for (int level : draw.x)
                    ++counts[static_cast<std::size_t>(level - 1)];
                const Vec features = scenarios::level_histogram(draw.x, d);
                std::map<std::string, int> exact;
                exact["bay"] = solvers::expected_loss_action(
                                   solvers::dirichlet_posterior_mean(ag_prior, counts), params)
                                   .action;
                exact["erm"] = solvers::erm_action(draw.x, params);
                exact["dro"] = solvers::dro_action(draw.x, params, cfg.eps);
                for (const auto& [name, map] : ag_nets) {
                    const int nn_action = decisions::argmax_level(map.decide(features));
                    for (const auto& [exact_name, exact_action] : exact)
                        agree_counts[name][exact_name] +=
                            nn_action == exact_action ? 1 : 0;
                }
            }
            for (const auto& [nn_name, counts_row] : agree_counts) {
                json row = json::object();
                for (const auto& [exact_name, count] : counts_row)
                    row[exact_name] =
                        static_cast<double>(count) / static_cast<double>(n_test);
                agreement[nn_name] = row;
            }
        }
    }

    report.summary = {{"experiment", cfg.experiment}, {"seed", cfg.seed},
                      {"eps", cfg.eps},              {"test_draws", n_test},
                      {"train", train_summaries},    {"profits", profit_entries},
                      {"agreement", agreement}};
    report.manifest = detail::base_manifest(cfg, ts, clock.seconds());
    return report;
}

// ----------------------------------------------------------------------
// Experiment: projection pathology (grad-proj)
// ----------------------------------------------------------------------

/**
 * Two-parameter toy: the decision is the parameter vector pushed through
 * the Euclidean ball projection, the target sits inside the ball. Gradient
 * steps through the projection's tangential Jacobian cannot re-enter the
 * ball from an infeasible start (the radial update component is zero while
 * outside), so the trajectory stalls on the boundary; a feasible start
 * converges to the target. The decision log holds both trajectories.
 */
inline EvalReport run_grad_proj(const RunConfig& cfg) {
    const detail::Stopwatch clock;
    const TrainSettings ts = resolve_training(cfg);
    detail::require_known_keys(cfg.scenario_overrides,
                               {"radius", "target", "starts", "init_seed"}, "scenario");
    const double radius = detail::get_or<double>(cfg.scenario_overrides, "radius", 1.0);
    const Vec target = detail::get_or<Vec>(cfg.scenario_overrides, "target", Vec{0.0, 0.5});
    if (target.size() != 2)
        throw ConfigError("scenario: target must have two components");
    if (!(radius > 0.0) || norm2(target) >= radius)
        throw ConfigError("scenario: target must lie strictly inside the ball");
    std::map<std::string, Vec> starts{{"outside", {1.2, 0.9}}, {"inside", {0.9, -0.2}}};
    if (cfg.scenario_overrides.contains("starts")) {
        const json& s = cfg.scenario_overrides.at("starts");
        detail::require_known_keys(s, {"outside", "inside"}, "scenario.starts");
        for (const auto& item : s.items()) {
            starts[item.key()] = item.value().get<Vec>();
            if (starts[item.key()].size() != 2)
                throw ConfigError("scenario.starts: starts must have two components");
        }
    }
    const std::uint64_t init_seed =
        detail::get_or<std::uint64_t>(cfg.scenario_overrides, "init_seed", 17);

    struct UnitScenario {
        training::PairSample draw_pair(std::uint64_t) const { return {Vec{1.0}, 0.0}; }
    };
    auto loss = [&target](double, std::span<const double> a) {
        return decisions::squared_loss(target, a);
    };
    const UnitScenario scenario;
    const Vec probe{1.0};

    EvalReport report;
    report.decision_columns = {"start", "iteration", "w0", "w1", "norm"};
    json start_summaries = json::object();
    for (const std::string& tag : {std::string("outside"), std::string("inside")}) {
        const Vec& w0 = starts.at(tag);
        nnet::Mlp net =
            nnet::init_weights({1, 2}, {nnet::Activation::linear}, init_seed, false);
        net.weights[0].data = w0;
        training::DecisionMap map(std::move(net),
                                  decisions::Prescriptor::ball_projection(radius, 2));
        training::TrainOptions options;
        options.total_samples = ts.total_samples;
        options.batch = ts.batch;
        // Store every iterate: the trajectory itself is the deliverable.
        options.iterate_target = static_cast<std::size_t>(
            (ts.total_samples + ts.batch - 1) / ts.batch);
        options.selection_seed = cfg.seed + 2;
        const training::TrainReport rep =
            training::train_bayes(map, scenario, loss, make_optimizer(ts), options);

        report.decision_rows.push_back({tag, "0", detail::cell(w0[0]), detail::cell(w0[1]),
                                        detail::cell(norm2(w0))});
        double min_norm = norm2(w0);
        for (const training::StoredIterate& it : rep.iterates) {
            const Vec& w = it.net.weights[0].data;
            const double nrm = norm2(w);
            min_norm = std::min(min_norm, nrm);
            report.decision_rows.push_back({tag, detail::cell(it.iteration),
                                            detail::cell(w[0]), detail::cell(w[1]),
                                            detail::cell(nrm)});
        }
        const Vec& w_final = rep.final_net.weights[0].data;
        const Vec prediction = map.decide(probe);
        Vec gap(prediction.size());
        for (std::size_t i = 0; i < gap.size(); ++i)
            gap[i] = prediction[i] - target[i];
        start_summaries[tag] = {{"start", w0},
                                {"final_w", w_final},
                                {"final_norm", norm2(w_final)},
                                {"min_norm", min_norm},
                                {"prediction", prediction},
                                {"distance_to_target", norm2(gap)}};
    }
    report.summary = {{"experiment", cfg.experiment},
                      {"seed", cfg.seed},
                      {"radius", radius},
                      {"target", target},
                      {"iterations", (ts.total_samples + ts.batch - 1) / ts.batch},
                      {"starts", start_summaries}};
    report.manifest = detail::base_manifest(cfg, ts, clock.seconds());
    return report;
}

// ----------------------------------------------------------------------
// Experiment: economic dispatch (dispatch)
// ----------------------------------------------------------------------

namespace detail {

struct DispatchData {
    std::vector<scenarios::WindRecord> train;
    std::vector<scenarios::WindRecord> test;
};

struct DispatchStrategyResult {
    std::string strategy;
    std::string observation;
    int frequency = 0;
    Vec replicate_means;
    Vec first_replicate_costs;  ///< per-interval costs of the first replicate
};

}  // namespace detail

/**
 * Day-ahead style dispatch against a wind series: per sampling frequency
 * the record list is thinned, split chronologically, and turned into
 * aligned supervised rows per observation set. The clairvoyant oracle and
 * the persistence baseline bracket the learned strategies; the regression
 * baseline commits to a point forecast under squared loss while the
 * end-to-end networks train through the dispatch cost itself.
 */
inline EvalReport run_dispatch(const RunConfig& cfg) {
    const detail::Stopwatch clock;
    const TrainSettings ts = resolve_training(cfg);
    detail::require_known_keys(cfg.scenario_overrides,
                               {"count", "train_fraction", "demand", "penalty", "costs",
                                "capacities", "decision_log_rows"},
                               "scenario");
    const Vec costs = detail::get_or<Vec>(cfg.scenario_overrides, "costs",
                                          Vec{15.0, 20.0, 15.0, 20.0, 30.0, 25.0});
    const Vec caps = detail::get_or<Vec>(cfg.scenario_overrides, "capacities",
                                         Vec{1.0, 0.5, 1.0, 1.0, 1.0, 0.5});
    const decisions::GeneratorFleet fleet = decisions::GeneratorFleet::make(costs, caps);
    const double demand = detail::get_or<double>(cfg.scenario_overrides, "demand", 4.0);
    const double penalty = detail::get_or<double>(cfg.scenario_overrides, "penalty", 100.0);
    if (!(demand > 0.0))
        throw ConfigError("scenario: demand must be positive");
    if (!(penalty > fleet.max_cost()))
        throw ConfigError("scenario: penalty must exceed every generation cost");
    const double train_fraction =
        detail::get_or<double>(cfg.scenario_overrides, "train_fraction", 0.8);
    const std::size_t log_rows =
        detail::get_or<std::size_t>(cfg.scenario_overrides, "decision_log_rows", 1000);

    // Data: a synthetic series by default, or an ingested CSV.
    std::vector<scenarios::WindRecord> records;
    json data_digest;
    if (cfg.data_source == "synthetic") {
        const std::size_t count = detail::get_or<std::size_t>(
            cfg.scenario_overrides, "count", cfg.paper_scale ? 129600 : 45000);
        records = scenarios::wind_synthetic(scenarios::WindModel{}, cfg.seed + 9000, count);
        data_digest = {{"source", "synthetic"}, {"records", records.size()}};
    } else {
        const std::string path = cfg.data_source.substr(4);
        const scenarios::IngestReport ingest = scenarios::ingest_wind_csv(path, cfg.column_map);
        records = ingest.records;
        data_digest = {{"source", path},
                       {"records", records.size()},
                       {"dropped", ingest.dropped_count}};
        if (records.size() < 100)
            throw FormatError("dataset too small after ingestion: " +
                              std::to_string(records.size()) + " records");
    }

    auto realized_cost = [&](double y, std::span<const double> action) {
        return decisions::dispatch_loss(fleet, demand, penalty, y, action).value;
    };
    auto loss = [&](double y, std::span<const double> a) {
        return decisions::dispatch_loss(fleet, demand, penalty, y, a);
    };

    // Fixed index tables keep replication seeds stable under filtering.
    const std::vector<std::string> all_obs{"myopic", "myopic_incomplete", "historical"};
    const std::vector<int> all_freq{10, 30, 60};
    const auto& registry = registered_strategies("dispatch");
    auto seed_for = [&](const std::string& strategy, const std::string& obs, int freq, int rep) {
        const auto s_it = std::find(registry.begin(), registry.end(), strategy);
        const auto o_it = std::find(all_obs.begin(), all_obs.end(), obs);
        const auto f_it = std::find(all_freq.begin(), all_freq.end(), freq);
        return cfg.seed + 1000000ULL * static_cast<std::uint64_t>(s_it - registry.begin() + 1) +
               100000ULL * static_cast<std::uint64_t>(o_it - all_obs.begin()) +
               10000ULL * static_cast<std::uint64_t>(f_it - all_freq.begin()) +
               static_cast<std::uint64_t>(rep);
    };

    std::vector<detail::DispatchStrategyResult> results;
    json intervals = json::object();
    EvalReport report;
    report.decision_columns = {"frequency", "record_index", "y"};
    std::vector<std::string> log_strategies;

    for (int freq : cfg.frequencies) {
        const std::vector<scenarios::WindRecord> thinned = scenarios::thin_records(records, freq);
        const auto [train_recs, test_recs] = scenarios::split_records(thinned, train_fraction);
        std::map<std::string, std::vector<scenarios::ObservationRow>> train_rows, test_rows;
        std::vector<std::string> kinds = cfg.observations;
        kinds.push_back("lag_power");
        for (const std::string& kind_name : kinds) {
            const scenarios::ObservationSpec spec{
                scenarios::observation_kind_from_name(kind_name)};
            train_rows[kind_name] = scenarios::build_observations(train_recs, spec, 2);
            test_rows[kind_name] = scenarios::build_observations(test_recs, spec, 2);
        }
        const std::vector<scenarios::ObservationRow>& eval_base =
            test_rows.at(cfg.observations.front());
        if (eval_base.empty() || train_rows.at(cfg.observations.front()).empty())
            throw ConfigError("dispatch: not enough records for frequency " +
                              std::to_string(freq));
        intervals[std::to_string(freq)] = {
            {"train", train_rows.at(cfg.observations.front()).size()},
            {"test", eval_base.size()}};

        // Clairvoyant oracle: solves dispatch at the realized output.
        if (cfg.wants("oracle")) {
            detail::DispatchStrategyResult r{"oracle", "none", freq, {}, {}};
            r.first_replicate_costs.reserve(eval_base.size());
            for (const auto& row : eval_base) {
                const decisions::DispatchResult sol =
                    decisions::dispatch_solve(fleet, demand, penalty, row.y);
                r.first_replicate_costs.push_back(realized_cost(row.y, sol.action));
            }
            r.replicate_means.push_back(mean(r.first_replicate_costs));
            results.push_back(std::move(r));
        }
        // Persistence: dispatch as if the next interval repeats this one.
        if (cfg.wants("lag1")) {
            detail::DispatchStrategyResult r{"lag1", "lag_power", freq, {}, {}};
            r.first_replicate_costs.reserve(eval_base.size());
            for (const auto& row : test_rows.at("lag_power")) {
                const decisions::DispatchResult sol =
                    decisions::dispatch_solve(fleet, demand, penalty, row.x[0]);
                r.first_replicate_costs.push_back(realized_cost(row.y, sol.action));
            }
            r.replicate_means.push_back(mean(r.first_replicate_costs));
            results.push_back(std::move(r));
        }

        for (const std::string& obs_name : cfg.observations) {
            const auto& rows_tr = train_rows.at(obs_name);
            const auto& rows_te = test_rows.at(obs_name);
            if (rows_te.size() != eval_base.size())
                throw ContractError("dispatch: observation sets are misaligned");

            // Point forecast + dispatch: deterministic least squares.
            if (cfg.wants("mle")) {
                const Vec theta = detail::least_squares_fit(rows_tr);
                detail::DispatchStrategyResult r{"mle", obs_name, freq, {}, {}};
                r.first_replicate_costs.reserve(rows_te.size());
                for (const auto& row : rows_te) {
                    const double y_hat = detail::least_squares_predict(theta, row.x);
                    const decisions::DispatchResult sol = decisions::dispatch_solve(
                        fleet, demand, penalty, std::max(y_hat, 0.0));
                    r.first_replicate_costs.push_back(realized_cost(row.y, sol.action));
                }
                r.replicate_means.push_back(mean(r.first_replicate_costs));
                results.push_back(std::move(r));
            }

            const scenarios::FeatureScaler scaler = scenarios::FeatureScaler::fit(rows_tr);
            const std::size_t in_dim = rows_tr.front().x.size();
            for (const std::string& strat :
                 {std::string("e2e_cal"), std::string("e2e_opl_softplus"),
                  std::string("e2e_opl_relu")}) {
                if (!cfg.wants(strat))
                    continue;
                detail::DispatchStrategyResult r{strat, obs_name, freq, {}, {}};
                for (int rep = 0; rep < cfg.replications; ++rep) {
                    const std::uint64_t seed = seed_for(strat, obs_name, freq, rep);
                    nnet::Mlp net = [&] {
                        if (strat == "e2e_cal")
                            return nnet::init_weights(
                                detail::layer_dims(in_dim, ts.hidden, fleet.count()),
                                detail::relu_stack(ts.hidden.size(), nnet::Activation::linear),
                                seed + 1);
                        const nnet::Activation out = strat == "e2e_opl_softplus"
                                                         ? nnet::Activation::softplus
                                                         : nnet::Activation::relu;
                        return nnet::init_weights(detail::layer_dims(in_dim, ts.hidden, 1),
                                                  detail::relu_stack(ts.hidden.size(), out),
                                                  seed + 1);
                    }();
                    decisions::Prescriptor prescriptor =
                        strat == "e2e_cal"
                            ? decisions::Prescriptor::sigmoid_capacity(fleet.capacities)
                            : decisions::Prescriptor::dispatch_opl(fleet, demand, penalty);
                    training::DecisionMap map(std::move(net), std::move(prescriptor));
                    const DatasetPairs pairs{&rows_tr, &scaler, seed};
                    training::TrainOptions options;
                    options.total_samples = ts.total_samples;
                    options.batch = ts.batch;
                    options.iterate_target = ts.iterate_target;
                    options.selection_seed = seed + 2;
                    training::train_bayes(map, pairs, loss, make_optimizer(ts), options);

                    Vec costs_rep;
                    costs_rep.reserve(rows_te.size());
                    for (const auto& row : rows_te)
                        costs_rep.push_back(
                            realized_cost(row.y, map.decide(scaler.apply(row.x))));
                    r.replicate_means.push_back(mean(costs_rep));
                    if (rep == 0)
                        r.first_replicate_costs = std::move(costs_rep);
                }
                results.push_back(std::move(r));
            }
        }

        // Plot-ready artifacts: CDFs and a capped per-interval log at the
        // leading observation set, first replicate.
        const std::string& lead_obs = cfg.observations.front();
        std::vector<const detail::DispatchStrategyResult*> logged;
        for (const auto& r : results) {
            if (r.frequency != freq)
                continue;
            if (r.strategy == "oracle" || r.strategy == "lag1" || r.observation == lead_obs)
                logged.push_back(&r);
        }
        for (const auto* r : logged) {
            const std::string tag = r->strategy == "oracle" || r->strategy == "lag1"
                                        ? r->strategy + "_" + std::to_string(freq)
                                        : r->strategy + "_" + r->observation + "_" +
                                              std::to_string(freq);
            report.cdfs[tag] = r->first_replicate_costs;
        }
        if (report.decision_columns.size() == 3) {
            for (const auto* r : logged)
                log_strategies.push_back(r->strategy);
            for (const std::string& name : log_strategies)
                report.decision_columns.push_back("cost_" + name);
        }
        const std::size_t n_log = std::min(log_rows, eval_base.size());
        for (std::size_t i = 0; i < n_log; ++i) {
            std::vector<std::string> row{std::to_string(freq),
                                         detail::cell(eval_base[i].record_index),
                                         detail::cell(eval_base[i].y)};
            for (const auto* r : logged)
                row.push_back(detail::cell(r->first_replicate_costs[i]));
            if (row.size() == report.decision_columns.size())
                report.decision_rows.push_back(std::move(row));
        }
    }

    json result_entries = json::array();
    for (const auto& r : results)
        result_entries.push_back({{"strategy", r.strategy},
                                  {"observation", r.observation},
                                  {"frequency", r.frequency},
                                  {"mean", mean(r.replicate_means)},
                                  {"std", stddev(r.replicate_means)},
                                  {"replicates", r.replicate_means}});
    report.summary = {{"experiment", cfg.experiment},
                      {"seed", cfg.seed},
                      {"replications", cfg.replications},
                      {"frequencies", cfg.frequencies},
                      {"observations", cfg.observations},
                      {"data", data_digest},
                      {"intervals", intervals},
                      {"train", {{"total_samples", ts.total_samples}, {"batch", ts.batch}}},
                      {"results", result_entries}};
    report.manifest = detail::base_manifest(cfg, ts, clock.seconds());
    return report;
}

// ----------------------------------------------------------------------
// Dispatcher
// ----------------------------------------------------------------------

inline EvalReport run_experiment(const RunConfig& cfg) {
    if (cfg.experiment == "mean-est")
        return run_mean_est(cfg);
    if (cfg.experiment == "newsvendor")
        return run_newsvendor(cfg);
    if (cfg.experiment == "grad-proj")
        return run_grad_proj(cfg);
    if (cfg.experiment == "dispatch")
        return run_dispatch(cfg);
    throw ConfigError("unknown experiment: " + cfg.experiment);
}

/// Configuration with every default resolved, as the CLI would build it
/// from an empty JSON object.
inline RunConfig default_config(const std::string& experiment) {
    return parse_run_config(json::object(), experiment);
}

}  // namespace e2eso::evalcli
