#include "ncssl/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>
#include <json.hpp>

#include "ncssl/acceptance.hpp"
#include "ncssl/csv.hpp"
#include "ncssl/data.hpp"
#include "ncssl/downstream.hpp"
#include "ncssl/dynamics.hpp"
#include "ncssl/parallel.hpp"
#include "ncssl/rng.hpp"
#include "ncssl/trainer.hpp"

#ifndef NCSSL_VERSION
#define NCSSL_VERSION "0.0.0"
#endif

namespace ncssl::cli {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kOutputEnv = "NCSSL_OUTPUT_DIR";

class RunFailure : public Error {
public:
    using Error::Error;
};

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

const KeySpec* find_spec(std::string_view key) {
    for (const auto& s : key_specs())
        if (s.name == key) return &s;
    return nullptr;
}

double parse_real(std::string_view key, std::string_view text, const std::string& origin) {
    try {
        const double v = csv::parse_double(text);
        if (!std::isfinite(v)) throw InvalidConfig("not finite");
        return v;
    } catch (const InvalidConfig&) {
        throw InvalidConfig(fmt::format("{}: {}: expected a finite number, got '{}'", origin, key, text));
    }
}

long long parse_integer(std::string_view key, std::string_view text, const std::string& origin) {
    const std::string_view t = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw InvalidConfig(fmt::format("{}: {}: expected an integer, got '{}'", origin, key, text));
    return v;
}

std::uint64_t parse_count(std::string_view key, std::string_view text, const std::string& origin) {
    const std::string_view t = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size())
        throw InvalidConfig(fmt::format("{}: {}: expected a non-negative integer, got '{}'", origin, key, text));
    return v;
}

bool parse_bool(std::string_view key, std::string_view text, const std::string& origin) {
    const std::string_view t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw InvalidConfig(fmt::format("{}: {}: expected true or false, got '{}'", origin, key, text));
}

std::vector<std::string_view> list_items(std::string_view text) {
    std::vector<std::string_view> items;
    if (trim(text).empty()) return items;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(',', start);
        items.push_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return items;
}

// Mode-specific defaults so each named experiment runs something meaningful
// without extra flags.
struct ExperimentDefault {
    std::string_view experiment;
    std::string_view key;
    std::string_view value;
};

constexpr ExperimentDefault kExperimentDefaults[] = {
    {"gd-emp", "eta", "0.1875"},
    {"deep", "mode", "deep"},
    {"deep", "depth", "2"},
    {"deep", "alpha", "0.5"},
    {"deep", "eta", "0.09"},
    {"deep", "delta", "1"},
    {"deep", "T", "400"},
    {"eps", "mode", "eps_reg"},
    {"eps", "eps", "0.3"},
    {"eps", "T", "1000"},
    {"diagonal", "mode", "diagonal"},
    {"diagonal", "sigma_i", "1"},
    {"diagonal", "eta", "0.1"},
    {"norm-check", "d", "6"},
    {"norm-check", "eta", "0.1"},
    {"norm-check", "T", "1"},
    {"norm-check", "dt", "0.0001"},
};

// Keys that do not change any computed number; kept out of CSV headers and the hash.
bool affects_results(std::string_view key) { return key != "output_dir" && key != "workers"; }

}  // namespace

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        {"experiment", KeyType::text, "", "flow, gd-pop, gd-emp, downstream, deep, eps, diagonal, sweep, norm-check"},
        {"output_dir", KeyType::text, "ncssl-out", "directory for CSV/JSON outputs"},
        {"seeds", KeyType::seed_list, "0,1,2,3,4", "comma-separated seeds; single-seed runs use the first"},
        {"model_seed", KeyType::count, "0", "seed of the random subspace rotation"},
        {"task_seed", KeyType::count, "7", "seed of the downstream task"},
        {"alpha", KeyType::real, "1", "predictor exponent"},
        {"eta", KeyType::real, "0.15", "weight decay"},
        {"sigma2", KeyType::real, "1", "augmentation variance"},
        {"delta", KeyType::real, "0.8", "initialization scale W = delta I"},
        {"mode", KeyType::text, "standard", "flow mode: standard, augmented_corr, eps_reg, deep, diagonal"},
        {"eps", KeyType::real, "0", "predictor regularizer"},
        {"depth", KeyType::integer, "1", "number of layers (deep mode)"},
        {"mu", KeyType::real, "1", "coordinate data scale (diagonal mode)"},
        {"sigma_i", KeyType::real, "0", "coordinate augmentation scale (diagonal mode)"},
        {"T", KeyType::real, "200", "integration horizon"},
        {"dt", KeyType::real, "0.01", "integration step"},
        {"trace_every", KeyType::count, "1", "keep every k-th trace row (the last row is always kept)"},
        {"d", KeyType::integer, "10", "ambient dimension"},
        {"r", KeyType::integer, "5", "rank of the invariant subspace"},
        {"axis_aligned", KeyType::boolean, "false", "use coordinate subspaces instead of a random rotation"},
        {"n", KeyType::count, "100000", "number of training samples (gd-emp)"},
        {"dump_samples", KeyType::boolean, "false", "also write the sampled triples (gd-emp)"},
        {"gamma", KeyType::real, "0.05", "step size"},
        {"mu_ema", KeyType::real, "0", "EMA coefficient (practice_ema)"},
        {"normalization", KeyType::text, "spectral", "practice_ema normalization: spectral, frobenius, none"},
        {"predictor_mode", KeyType::text, "theory_wwT",
         "theory_wwT, theory_x1corr, empirical_xcorr, practice_ema"},
        {"max_steps", KeyType::count, "100000", "step limit"},
        {"stop_tol", KeyType::real, "1e-10", "stop when ||W' - W||_F <= stop_tol"},
        {"batch_size", KeyType::count, "0", "practice_ema batch rows (0 = full batch)"},
        {"spectrum_every", KeyType::count, "0", "record the predictor-input spectrum every k steps"},
        {"beta", KeyType::real, "0.1", "downstream label noise"},
        {"n_list", KeyType::count_list, "25,50,100,200,400,800", "downstream sample sizes"},
        {"rho", KeyType::text, "cuberoot", "ridge coefficient, or cuberoot for ||P_hat - P||_F^(1/3)"},
        {"p_hat", KeyType::text, "projector", "downstream representation: projector, identity, perturbed"},
        {"perturb_eps", KeyType::real, "0.01", "||P_hat - P||_F for p_hat = perturbed"},
        {"param", KeyType::text, "", "flow key swept by the sweep experiment"},
        {"values", KeyType::real_list, "", "values taken by param"},
        {"workers", KeyType::count, "0", "worker threads for sweeps (0 = available parallelism)"},
        {"tol", KeyType::text, "auto", "tolerance for limit assertions"},
    };
    return specs;
}

const std::vector<std::string_view>& experiment_names() {
    static const std::vector<std::string_view> names = {"flow", "gd-pop",   "gd-emp",   "downstream", "deep",
                                                        "eps",  "diagonal", "sweep",    "norm-check"};
    return names;
}

// ---- ExperimentConfig ---------------------------------------------------------

ExperimentConfig::ExperimentConfig() {
    for (const auto& s : key_specs()) entries_[std::string(s.name)] = {std::string(s.default_value), "default"};
}

void ExperimentConfig::set(std::string_view key, std::string value, std::string origin) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw InvalidConfig(fmt::format("{}: unknown key '{}'", origin, key));
    it->second = {std::move(value), std::move(origin)};
}

const ExperimentConfig::Entry& ExperimentConfig::entry(std::string_view key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw InvalidConfig(fmt::format("unknown key '{}'", key));
    return it->second;
}

const std::string& ExperimentConfig::value(std::string_view key) const { return entry(key).value; }
const std::string& ExperimentConfig::origin(std::string_view key) const { return entry(key).origin; }
bool ExperimentConfig::is_default(std::string_view key) const { return entry(key).origin == "default"; }

double ExperimentConfig::real(std::string_view key) const {
    const Entry& e = entry(key);
    return parse_real(key, e.value, e.origin);
}

long long ExperimentConfig::integer(std::string_view key) const {
    const Entry& e = entry(key);
    return parse_integer(key, e.value, e.origin);
}

std::uint64_t ExperimentConfig::count(std::string_view key) const {
    const Entry& e = entry(key);
    return parse_count(key, e.value, e.origin);
}

bool ExperimentConfig::boolean(std::string_view key) const {
    const Entry& e = entry(key);
    return parse_bool(key, e.value, e.origin);
}

std::vector<double> ExperimentConfig::reals(std::string_view key) const {
    const Entry& e = entry(key);
    std::vector<double> out;
    for (auto item : list_items(e.value)) out.push_back(parse_real(key, item, e.origin));
    return out;
}

std::vector<std::uint64_t> ExperimentConfig::counts(std::string_view key) const {
    const Entry& e = entry(key);
    std::vector<std::uint64_t> out;
    for (auto item : list_items(e.value)) out.push_back(parse_count(key, item, e.origin));
    return out;
}

void ExperimentConfig::finalize() {
    const std::string exp = value("experiment");
    if (exp.empty()) throw InvalidConfig("experiment: no experiment given (set 'experiment = ...' or use a subcommand)");
    if (std::find(experiment_names().begin(), experiment_names().end(), exp) == experiment_names().end())
        throw InvalidConfig(fmt::format("{}: experiment: unknown experiment '{}'", origin("experiment"), exp));

    for (const auto& d : kExperimentDefaults) {
        if (d.experiment != exp) continue;
        if (is_default(d.key)) {
            entries_.find(d.key)->second.value = std::string(d.value);
        } else if (d.key == "mode" && value("mode") != d.value) {
            throw InvalidConfig(fmt::format("{}: mode: experiment '{}' runs in {} mode, got '{}'", origin("mode"), exp,
                                            d.value, value("mode")));
        }
    }

    for (const auto& s : key_specs()) {
        switch (s.type) {
            case KeyType::real: real(s.name); break;
            case KeyType::integer: integer(s.name); break;
            case KeyType::count: count(s.name); break;
            case KeyType::boolean: boolean(s.name); break;
            case KeyType::real_list: reals(s.name); break;
            case KeyType::seed_list:
            case KeyType::count_list: counts(s.name); break;
            case KeyType::text: break;
        }
    }
    const auto check_choice = [&](std::string_view key, auto&& parse) {
        try {
            parse(value(key));
        } catch (const InvalidConfig& e) {
            throw InvalidConfig(fmt::format("{}: {}: {}", origin(key), key, e.what()));
        }
    };
    check_choice("mode", [](const std::string& v) { parse_flow_mode(v); });
    check_choice("normalization", [](const std::string& v) { parse_normalization(v); });
    check_choice("predictor_mode", [](const std::string& v) { parse_predictor_mode(v); });
    check_choice("p_hat", [](const std::string& v) {
        if (v != "projector" && v != "identity" && v != "perturbed")
            throw InvalidConfig(fmt::format("expected projector, identity or perturbed, got '{}'", v));
    });
    if (value("rho") != "cuberoot") real("rho");
    if (value("tol") != "auto") real("tol");
    if (counts("seeds").empty()) throw InvalidConfig(fmt::format("{}: seeds: at least one seed is required", origin("seeds")));
}

std::vector<std::string> ExperimentConfig::resolved_lines() const {
    std::vector<std::string> lines;
    for (const auto& s : key_specs())
        if (affects_results(s.name)) lines.push_back(fmt::format("{}={}", s.name, value(s.name)));
    return lines;
}

std::uint64_t ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& line : resolved_lines()) {
        for (unsigned char c : line) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h ^= '\n';
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string ExperimentConfig::hash_hex() const { return fmt::format("{:016x}", hash()); }

void apply_config_text(ExperimentConfig& cfg, std::string_view text, const std::string& source) {
    std::map<std::string, std::size_t, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::string where = fmt::format("{}:{}", source, line_no);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw InvalidConfig(fmt::format("{}: expected 'key = value', got '{}'", where, line));
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) throw InvalidConfig(fmt::format("{}: missing key before '='", where));
        if (find_spec(key) == nullptr) throw InvalidConfig(fmt::format("{}: unknown key '{}'", where, key));
        if (value.empty()) throw InvalidConfig(fmt::format("{}: empty value for '{}'", where, key));
        if (const auto it = seen.find(key); it != seen.end())
            throw InvalidConfig(fmt::format("{}: duplicate key '{}' (first set on line {})", where, key, it->second));
        seen.emplace(std::string(key), line_no);
        cfg.set(key, std::string(value), where);
    }
}

void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidConfig(fmt::format("cannot open config file '{}'", path.string()));
    std::ostringstream text;
    text << in.rdbuf();
    apply_config_text(cfg, text.str(), path.string());
}

// ---- experiments ----------------------------------------------------------------

namespace {

std::string num(double v) { return csv::format_double(v); }

struct Assertion {
    std::string name;
    double value;
    double expected;
    double tol;
    bool passed;
};

struct Outcome {
    std::vector<Artifact> csvs;
    json results = json::object();
    std::vector<Assertion> assertions;

    void check(std::string name, double value, double expected, double tol) {
        const bool ok = std::isfinite(value) && std::abs(value - expected) <= tol;
        assertions.push_back({std::move(name), value, expected, tol, ok});
    }
};

class CsvWriter {
public:
    CsvWriter(const ExperimentConfig& cfg, const std::vector<std::string>& header) {
        std::vector<std::string> comments{"config_hash=" + cfg.hash_hex()};
        for (auto& line : cfg.resolved_lines()) comments.push_back(std::move(line));
        csv::write_comments(out_, comments);
        csv::write_row(out_, header);
    }
    void row(const std::vector<std::string>& cells) { csv::write_row(out_, cells); }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

double tolerance(const ExperimentConfig& cfg, double automatic) {
    return cfg.value("tol") == "auto" ? automatic : cfg.real("tol");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Stable limit of lambda' = lambda * (-A a^2 + B a - eta), a = |lambda|^p + shift,
// started from delta. nullopt where convergence is only algebraic (double root)
// or delta sits on the unstable root.
std::optional<double> quadratic_basin(double A, double B, double eta, double p, double shift, double delta) {
    if (delta == 0.0) return 0.0;
    const double disc = B * B - 4.0 * A * eta;
    if (std::abs(disc) <= 1e-12 * B * B) return std::nullopt;
    if (disc < 0.0) return 0.0;
    const double am = (B - std::sqrt(disc)) / (2.0 * A);
    const double ap = (B + std::sqrt(disc)) / (2.0 * A);
    if (ap <= shift) return 0.0;
    const double a0 = std::pow(std::abs(delta), p) + shift;
    if (std::abs(a0 - am) <= 1e-9 * std::max(1.0, am)) return std::nullopt;
    if (a0 < am) return 0.0;
    return std::copysign(std::pow(ap - shift, 1.0 / p), delta);
}

struct Prediction {
    std::optional<double> S;
    std::optional<double> B;
};

Prediction predict_flow(const DynamicsConfig& c) {
    const double p = 2.0 * c.alpha;
    const double lead = 1.0 + c.sigma2;
    switch (c.mode) {
        case FlowMode::standard:
            return {quadratic_basin(1.0, 1.0, c.eta, p, 0.0, c.delta), quadratic_basin(lead, 1.0, c.eta, p, 0.0, c.delta)};
        case FlowMode::augmented_corr:
            return {quadratic_basin(1.0, 1.0, c.eta, p, 0.0, c.delta),
                    quadratic_basin(std::pow(lead, 1.0 + 2.0 * c.alpha), 1.0, c.eta, p, 0.0, c.delta)};
        case FlowMode::eps_reg:
            return {quadratic_basin(1.0, 1.0, c.eta, p, c.eps, c.delta),
                    quadratic_basin(lead, 1.0, c.eta, p, c.eps, c.delta)};
        case FlowMode::deep: {
            const DeepWindow w = deep_window(c.depth, c.alpha, c.sigma2);
            if (c.eta > w.eta_low && c.eta < w.eta_high && c.delta >= w.c_low)
                return {deep_limit(c.depth, c.alpha, c.eta), 0.0};
            return {};
        }
        case FlowMode::diagonal: {
            const double mu2 = c.mu * c.mu;
            const auto v = quadratic_basin(mu2 * mu2 + mu2 * c.sigma_i * c.sigma_i, mu2 * c.mu, c.eta, c.alpha, 0.0,
                                           c.delta);
            return {v, v};
        }
    }
    return {};
}

// Population GD follows the exact gradient. With the x1-correlation predictor
// the B eigenvalue of W_p is ((1 + sigma2) lambda^2)^alpha, which also scales
// the linear term.
Prediction predict_population_gd(const TrainerConfig& t, double sigma2, double delta) {
    const double p = 2.0 * t.alpha;
    const double lead = 1.0 + sigma2;
    switch (t.predictor_mode) {
        case PredictorMode::theory_wwT:
            return {quadratic_basin(1.0, 1.0, t.eta, p, t.eps, delta), quadratic_basin(lead, 1.0, t.eta, p, t.eps, delta)};
        case PredictorMode::theory_x1corr:
            if (t.eps != 0.0) return {};
            return {quadratic_basin(1.0, 1.0, t.eta, p, 0.0, delta),
                    quadratic_basin(std::pow(lead, 1.0 + 2.0 * t.alpha), std::pow(lead, t.alpha), t.eta, p, 0.0, delta)};
        case PredictorMode::empirical_xcorr:
        case PredictorMode::practice_ema: break;
    }
    return {};
}

DynamicsConfig dynamics_config(const ExperimentConfig& c) {
    DynamicsConfig d;
    d.alpha = c.real("alpha");
    d.eta = c.real("eta");
    d.sigma2 = c.real("sigma2");
    d.delta = c.real("delta");
    d.mode = parse_flow_mode(c.value("mode"));
    d.eps = c.real("eps");
    const long long depth = c.integer("depth");
    if (depth < 1 || depth > 1000) throw InvalidConfig(fmt::format("{}: depth: must lie in [1, 1000]", c.origin("depth")));
    d.depth = static_cast<int>(depth);
    d.mu = c.real("mu");
    d.sigma_i = c.real("sigma_i");
    d.validate();
    return d;
}

void check_horizon(const ExperimentConfig& c) {
    if (!(c.real("T") > 0.0)) throw InvalidConfig(fmt::format("{}: T: must be positive", c.origin("T")));
    if (!(c.real("dt") > 0.0) || c.real("dt") > c.real("T"))
        throw InvalidConfig(fmt::format("{}: dt: must lie in (0, T]", c.origin("dt")));
}

FlowTrace named_flow(const DynamicsConfig& d, double T, double dt, const std::string& name) {
    try {
        return integrate_flow(d, T, dt);
    } catch (const BlowUpError& e) {
        throw RunFailure(fmt::format("run '{}' blew up at t={}: {}", name, e.at(), e.what()));
    }
}

std::size_t trace_every(const ExperimentConfig& c) { return std::max<std::uint64_t>(1, c.count("trace_every")); }

Outcome flow_experiment(const ExperimentConfig& c) {
    check_horizon(c);
    const DynamicsConfig d = dynamics_config(c);
    const FlowTrace trace = named_flow(d, c.real("T"), c.real("dt"), c.value("experiment"));
    const FlowSummary s = summarize(trace);
    const Prediction pred = predict_flow(d);

    Outcome o;
    CsvWriter w(c, {"t", "lambda_S", "lambda_B"});
    const std::size_t every = trace_every(c);
    for (std::size_t i = 0; i < trace.times.size(); ++i)
        if (i % every == 0 || i + 1 == trace.times.size())
            w.row({num(trace.times[i]), num(trace.lambda_S[i]), num(trace.lambda_B[i])});
    o.csvs.push_back({"trace.csv", w.str()});

    o.results["mode"] = std::string(to_string(d.mode));
    o.results["steps"] = trace.times.size() - 1;
    o.results["lambda_S"] = s.lambda_S;
    o.results["lambda_B"] = s.lambda_B;
    o.results["drift_S"] = s.drift_S;
    o.results["drift_B"] = s.drift_B;
    o.results["settled"] = s.settled();
    o.results["predicted_lambda_S"] = optional_json(pred.S);
    o.results["predicted_lambda_B"] = optional_json(pred.B);
    switch (d.mode) {
        case FlowMode::standard:
        case FlowMode::augmented_corr:
        case FlowMode::diagonal: o.results["collapse_threshold"] = collapse_threshold(d); break;
        case FlowMode::deep: {
            const DeepWindow win = deep_window(d.depth, d.alpha, d.sigma2);
            o.results["eta_window"] = {win.eta_low, win.eta_high};
            o.results["c_low"] = win.c_low;
            break;
        }
        case FlowMode::eps_reg:
            if (d.eta > 0.0 && d.eta < 0.25) o.results["eps_limit"] = eps_limit(d.alpha, d.eta, d.eps);
            break;
    }

    const double tol = tolerance(c, 1e-6);
    if (pred.S) o.check("lambda_S", s.lambda_S, *pred.S, tol);
    if (pred.B && d.mode != FlowMode::diagonal) o.check("lambda_B", s.lambda_B, *pred.B, tol);
    return o;
}

double sweep_field(DynamicsConfig& d, std::string_view param, double v) {
    if (param == "alpha") return d.alpha = v;
    if (param == "eta") return d.eta = v;
    if (param == "sigma2") return d.sigma2 = v;
    if (param == "delta") return d.delta = v;
    if (param == "eps") return d.eps = v;
    if (param == "mu") return d.mu = v;
    if (param == "sigma_i") return d.sigma_i = v;
    if (param == "depth") {
        if (v != std::floor(v) || v < 1 || v > 1000) throw InvalidConfig(fmt::format("depth value {} is not a valid depth", v));
        d.depth = static_cast<int>(v);
        return v;
    }
    throw InvalidConfig(fmt::format("param: cannot sweep '{}' (choose alpha, eta, sigma2, delta, eps, depth, mu, sigma_i)", param));
}

unsigned worker_count(const ExperimentConfig& c) {
    const std::uint64_t w = c.count("workers");
    return w == 0 ? default_workers() : static_cast<unsigned>(std::min<std::uint64_t>(w, 256));
}

Outcome sweep_experiment(const ExperimentConfig& c) {
    check_horizon(c);
    const std::string param = c.value("param");
    if (param.empty()) throw InvalidConfig(fmt::format("{}: param: sweep needs a parameter name", c.origin("param")));
    const std::vector<double> values = c.reals("values");
    if (values.empty()) throw InvalidConfig(fmt::format("{}: values: sweep needs at least one value", c.origin("values")));

    const DynamicsConfig base = dynamics_config(c);
    std::vector<DynamicsConfig> runs;
    for (double v : values) {
        DynamicsConfig d = base;
        try {
            sweep_field(d, param, v);
            d.validate();
        } catch (const InvalidConfig& e) {
            throw InvalidConfig(fmt::format("{}: sweep {}={}: {}", c.origin("values"), param, v, e.what()));
        }
        runs.push_back(d);
    }

    struct Slot {
        FlowSummary summary;
        Prediction pred;
        std::exception_ptr failure;
    };
    std::vector<Slot> slots(runs.size());
    const double T = c.real("T"), dt = c.real("dt");
    parallel_for(runs.size(), worker_count(c), [&](std::size_t i) {
        try {
            const std::string name = fmt::format("sweep[{}={}]", param, values[i]);
            slots[i].summary = summarize(named_flow(runs[i], T, dt, name));
            slots[i].pred = predict_flow(runs[i]);
        } catch (...) {
            slots[i].failure = std::current_exception();
        }
    });
    for (const auto& s : slots)
        if (s.failure) std::rethrow_exception(s.failure);

    Outcome o;
    const double tol = tolerance(c, 1e-6);
    const auto cell = [](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    CsvWriter w(c, {param, "lambda_S", "lambda_B", "predicted_lambda_S", "predicted_lambda_B"});
    json rows = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const Slot& s = slots[i];
        w.row({num(values[i]), num(s.summary.lambda_S), num(s.summary.lambda_B), cell(s.pred.S), cell(s.pred.B)});
        rows.push_back({{param, values[i]},
                        {"lambda_S", s.summary.lambda_S},
                        {"lambda_B", s.summary.lambda_B},
                        {"predicted_lambda_S", optional_json(s.pred.S)},
                        {"predicted_lambda_B", optional_json(s.pred.B)}});
        const std::string label = fmt::format("{}={}", param, values[i]);
        if (s.pred.S) o.check(label + " lambda_S", s.summary.lambda_S, *s.pred.S, tol);
        if (s.pred.B && runs[i].mode != FlowMode::diagonal) o.check(label + " lambda_B", s.summary.lambda_B, *s.pred.B, tol);
    }
    o.csvs.push_back({"sweep.csv", w.str()});
    o.results["param"] = param;
    o.results["mode"] = std::string(to_string(base.mode));
    o.results["runs"] = std::move(rows);
    return o;
}

AugmentationModel model_from(const ExperimentConfig& c) {
    const long long d = c.integer("d"), r = c.integer("r");
    if (d < 1) throw InvalidConfig(fmt::format("{}: d: must be at least 1", c.origin("d")));
    if (r < 0 || r > d) throw InvalidConfig(fmt::format("{}: r: must lie in [0, d]", c.origin("r")));
    const double sigma2 = c.real("sigma2");
    if (!(sigma2 >= 0.0)) throw InvalidConfig(fmt::format("{}: sigma2: must be non-negative", c.origin("sigma2")));
    return make_model(d, r, sigma2, c.count("model_seed"), c.boolean("axis_aligned"));
}

Outcome train_experiment(const ExperimentConfig& c, bool empirical) {
    const AugmentationModel model = model_from(c);
    TrainerConfig t;
    t.alpha = c.real("alpha");
    t.eta = c.real("eta");
    t.gamma = c.real("gamma");
    t.eps = c.real("eps");
    t.mu_ema = c.real("mu_ema");
    t.normalization = parse_normalization(c.value("normalization"));
    t.predictor_mode = parse_predictor_mode(c.value("predictor_mode"));
    if (empirical && c.is_default("predictor_mode")) t.predictor_mode = PredictorMode::empirical_xcorr;
    if (!empirical && t.predictor_mode == PredictorMode::empirical_xcorr)
        throw InvalidConfig(fmt::format("{}: predictor_mode: empirical_xcorr needs samples, use gd-emp",
                                        c.origin("predictor_mode")));
    t.max_steps = c.count("max_steps");
    t.stop_tol = c.real("stop_tol");
    t.batch_size = c.count("batch_size");
    t.spectrum_every = c.count("spectrum_every");
    t.validate();
    const double delta = c.real("delta");

    std::optional<SampleSet> samples;
    if (empirical) {
        if (c.count("n") < 1) throw InvalidConfig(fmt::format("{}: n: must be at least 1", c.origin("n")));
        samples = sample_triples(model, static_cast<Eigen::Index>(c.count("n")), c.counts("seeds").front());
    }

    TrainReport rep;
    try {
        rep = train(delta, model, t, samples ? &*samples : nullptr);
    } catch (const BlowUpError& e) {
        throw RunFailure(fmt::format("run '{}' blew up at step {}: {}", c.value("experiment"), e.at(), e.what()));
    }

    Outcome o;
    CsvWriter w(c, {"step", "err", "best_c", "lambda_S_est", "lambda_B_est", "fro_norm"});
    const std::size_t every = trace_every(c);
    for (std::size_t i = 0; i < rep.trace.size(); ++i) {
        if (i % every != 0 && i + 1 != rep.trace.size()) continue;
        const TraceEntry& e = rep.trace[i];
        w.row({std::to_string(e.step), num(e.err), num(e.best_c), num(e.lambda_S_est), num(e.lambda_B_est),
               num(e.fro_norm)});
    }
    o.csvs.push_back({"trace.csv", w.str()});
    if (!rep.spectra.empty()) {
        CsvWriter sw(c, {"epoch", "idx", "eigenvalue"});
        for (const auto& row : rep.spectra)
            for (Eigen::Index k = 0; k < row.eigenvalues.size(); ++k)
                sw.row({std::to_string(row.epoch), std::to_string(k), num(row.eigenvalues(k))});
        o.csvs.push_back({"spectrum.csv", sw.str()});
    }
    if (samples && c.boolean("dump_samples")) {
        std::ostringstream dump;
        write_samples_csv(dump, model, *samples);
        o.csvs.push_back({"samples.csv", dump.str()});
    }

    const TraceEntry& last = rep.trace.back();
    o.results["predictor_mode"] = std::string(to_string(t.predictor_mode));
    o.results["steps_run"] = rep.steps_run;
    o.results["converged"] = rep.converged;
    o.results["err"] = last.err;
    o.results["best_c"] = last.best_c;
    o.results["lambda_S_est"] = last.lambda_S_est;
    o.results["lambda_B_est"] = last.lambda_B_est;
    o.results["fro_norm"] = last.fro_norm;

    if (!empirical) {
        const Prediction pred = predict_population_gd(t, model.sigma2, delta);
        o.results["predicted_lambda_S"] = optional_json(pred.S);
        o.results["predicted_lambda_B"] = optional_json(pred.B);
        const double tol = tolerance(c, 1e-6);
        if (pred.S && model.r > 0) o.check("lambda_S_est", last.lambda_S_est, *pred.S, tol);
        if (pred.B && model.r < model.d) o.check("lambda_B_est", last.lambda_B_est, *pred.B, tol);
    } else {
        const EtaWindow win = empirical_eta_window(model.sigma2);
        o.results["n"] = samples->n;
        o.results["eta_window"] = {win.low, win.high};
        if (t.predictor_mode == PredictorMode::empirical_xcorr && t.alpha == 1.0 && t.eps == 0.0 && t.eta > win.low &&
            t.eta < win.high) {
            const double target = directcopy_limit(t.eta);
            const double dist = op_norm(Matrix(rep.final_W - target * model.P_S.matrix()));
            o.results["target_c"] = target;
            o.results["distance_to_target"] = dist;
            o.check("||W - c P_S||_op", dist, 0.0, tolerance(c, 0.05));
        }
    }
    return o;
}

Outcome downstream_experiment(const ExperimentConfig& c) {
    const long long d = c.integer("d"), r = c.integer("r");
    if (d < 1) throw InvalidConfig(fmt::format("{}: d: must be at least 1", c.origin("d")));
    if (r < 1 || r > d) throw InvalidConfig(fmt::format("{}: r: must lie in [1, d]", c.origin("r")));
    const double beta = c.real("beta");
    if (!(beta >= 0.0)) throw InvalidConfig(fmt::format("{}: beta: must be non-negative", c.origin("beta")));
    const std::uint64_t task_seed = c.count("task_seed");
    const DownstreamTask task = make_task(d, r, beta, task_seed, c.boolean("axis_aligned"));

    Matrix P_hat;
    const std::string kind = c.value("p_hat");
    if (kind == "projector") {
        P_hat = task.P.matrix();
    } else if (kind == "identity") {
        P_hat = Matrix::Identity(d, d);
    } else {
        const double eps = c.real("perturb_eps");
        if (!(eps >= 0.0)) throw InvalidConfig(fmt::format("{}: perturb_eps: must be non-negative", c.origin("perturb_eps")));
        P_hat = task.P.matrix() + random_perturbation(d, eps, split_seed(task_seed, 1));
    }

    RhoRule rule = CubeRootRho{};
    if (c.value("rho") != "cuberoot") {
        const double rho = c.real("rho");
        if (!(rho > 0.0)) throw InvalidConfig(fmt::format("{}: rho: must be positive", c.origin("rho")));
        rule = FixedRho{rho};
    }

    std::vector<Eigen::Index> n_list;
    for (auto n : c.counts("n_list")) n_list.push_back(static_cast<Eigen::Index>(n));
    if (n_list.empty()) throw InvalidConfig(fmt::format("{}: n_list: needs at least one sample size", c.origin("n_list")));
    for (auto n : n_list)
        if (n < 1) throw InvalidConfig(fmt::format("{}: n_list: sample sizes must be positive", c.origin("n_list")));
    const std::vector<std::uint64_t> seeds = c.counts("seeds");

    const ComplexitySweep sweep = complexity_sweep(task, P_hat, n_list, seeds, rule, worker_count(c));

    Outcome o;
    CsvWriter rows(c, {"n", "seed", "error"});
    for (const auto& row : sweep.rows) rows.row({std::to_string(row.n), std::to_string(row.seed), num(row.error)});
    o.csvs.push_back({"sweep.csv", rows.str()});
    CsvWriter agg(c, {"n", "mean", "std"});
    json table = json::array();
    for (const auto& a : sweep.aggregate) {
        agg.row({std::to_string(a.n), num(a.mean), num(a.std)});
        table.push_back({{"n", a.n}, {"mean", a.mean}, {"std", a.std}});
    }
    o.csvs.push_back({"aggregate.csv", agg.str()});
    o.results["p_hat"] = kind;
    o.results["rho"] = sweep.rho;
    o.results["p_hat_distance"] = fro_norm(Matrix(P_hat - task.P.matrix()));
    o.results["aggregate"] = std::move(table);
    return o;
}

Outcome norm_check_experiment(const ExperimentConfig& c) {
    check_horizon(c);
    const long long d = c.integer("d");
    if (d < 1) throw InvalidConfig(fmt::format("{}: d: must be at least 1", c.origin("d")));
    const double rho = c.real("eta");
    if (!(rho >= 0.0)) throw InvalidConfig(fmt::format("{}: eta: must be non-negative", c.origin("eta")));

    NormalStream s(split_seed(c.counts("seeds").front(), 0));
    const auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = s.normal();
        return m;
    };
    const Matrix eye = Matrix::Identity(d, d);
    const Matrix W = eye + 0.3 * gaussian(d, d);
    const Matrix Wp = eye + 0.3 * gaussian(d, d);
    const Matrix Wa = eye + 0.3 * gaussian(d, d);
    const Vector x1 = gaussian(d, 1).col(0);
    const Vector x2 = gaussian(d, 1).col(0);

    const NormDecayReport rep = norm_decay_check(W, Wp, Wa, x1, x2, rho);
    const double T = c.real("T");
    const double expected = W.squaredNorm() * std::exp(-2.0 * rho * T);
    const double got = integrate_norm_flow(W, Wp, Wa, x1, x2, rho, T, c.real("dt"));

    Outcome o;
    CsvWriter w(c, {"quantity", "value", "reference"});
    w.row({"inner_product", num(rep.inner_product), num(0.0)});
    w.row({"norm_rate", num(rep.fd_rate), num(rep.predicted_rate)});
    w.row({"norm_sq_T", num(got), num(expected)});
    o.csvs.push_back({"norm_check.csv", w.str()});
    o.results["inner_product"] = rep.inner_product;
    o.results["fd_rate"] = rep.fd_rate;
    o.results["predicted_rate"] = rep.predicted_rate;
    o.results["norm_sq_T"] = got;
    o.results["expected_norm_sq_T"] = expected;

    o.check("inner_product", rep.inner_product, 0.0, 1e-10);
    o.check("norm_rate", rep.fd_rate, rep.predicted_rate, 1e-4 * std::max(std::abs(rep.predicted_rate), 1e-12));
    o.check("norm_sq_T", got, expected, tolerance(c, 1e-3) * expected);
    return o;
}

json assertion_json(const Assertion& a) {
    return {{"name", a.name}, {"value", a.value}, {"expected", a.expected}, {"tol", a.tol}, {"passed", a.passed}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

RunOutput run_experiment(const ExperimentConfig& c) {
    const std::string exp = c.value("experiment");
    Outcome o;
    if (exp == "flow" || exp == "deep" || exp == "eps" || exp == "diagonal") o = flow_experiment(c);
    else if (exp == "sweep") o = sweep_experiment(c);
    else if (exp == "gd-pop") o = train_experiment(c, false);
    else if (exp == "gd-emp") o = train_experiment(c, true);
    else if (exp == "downstream") o = downstream_experiment(c);
    else if (exp == "norm-check") o = norm_check_experiment(c);
    else throw InvalidConfig(fmt::format("experiment: unknown experiment '{}'", exp));

    RunOutput out;
    json assertions = json::array();
    for (const auto& a : o.assertions) {
        assertions.push_back(assertion_json(a));
        if (!a.passed) {
            out.passed = false;
            out.failures.push_back(fmt::format("{}: {} vs expected {} (tol {})", a.name, num(a.value), num(a.expected),
                                               num(a.tol)));
        }
    }
    out.files = std::move(o.csvs);

    json summary = {{"experiment", exp},
                    {"config_hash", c.hash_hex()},
                    {"passed", out.passed},
                    {"assertions", std::move(assertions)},
                    {"results", std::move(o.results)}};
    out.files.push_back({"summary.json", dump(summary)});

    json config = json::object();
    for (const auto& s : key_specs()) config[std::string(s.name)] = c.value(s.name);
    json files = json::array();
    for (const auto& f : out.files) files.push_back({{"name", f.name}, {"config_hash", c.hash_hex()}});
    json manifest = {
        {"tool", "ncssl"},
        {"experiment", exp},
        {"config_hash", c.hash_hex()},
        {"config", std::move(config)},
        {"seeds",
         {{"seeds", c.counts("seeds")}, {"model_seed", c.count("model_seed")}, {"task_seed", c.count("task_seed")}}},
        {"versions",
         {{"ncssl", NCSSL_VERSION},
          {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                        NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}}},
        {"files", std::move(files)}};
    out.files.push_back({"manifest.json", dump(manifest)});
    return out;
}

void write_outputs(const std::filesystem::path& dir, const RunOutput& out) {
    std::filesystem::create_directories(dir);
    for (const auto& f : out.files) {
        const auto path = dir / f.name;
        const auto tmp = dir / (f.name + ".tmp");
        {
            std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
            os << f.content;
            if (!os) throw Error(fmt::format("cannot write '{}'", tmp.string()));
        }
        std::filesystem::rename(tmp, path);
    }
}

// ---- command line -----------------------------------------------------------------

namespace {

// Library validation messages start with the offending key; point at its origin.
std::string annotate(const ExperimentConfig& cfg, const std::string& msg) {
    const auto end = msg.find_first_of(" :");
    const std::string first = msg.substr(0, end);
    if (find_spec(first) == nullptr || msg.find(cfg.origin(first)) != std::string::npos) return msg;
    return fmt::format("{} (from {})", msg, cfg.origin(first));
}

int verify_all(const std::string& mutate, const std::string& format, std::ostream& out) {
    acceptance::Options opts;
    if (mutate == "threshold") opts.b_threshold_scale = 1.1;
    int failed = 0;
    json report = json::array();
    for (const auto& c : acceptance::criteria()) {
        const acceptance::CriterionResult r = acceptance::run_criterion(c, opts);
        if (!r.passed) ++failed;
        if (format == "json") {
            report.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
        } else {
            out << acceptance::format_line(r) << '\n' << std::flush;
        }
    }
    if (format == "json") {
        out << dump({{"passed", failed == 0}, {"failed", failed}, {"criteria", std::move(report)}});
    } else {
        out << fmt::format("{} of {} criteria passed\n", acceptance::criteria().size() - failed,
                           acceptance::criteria().size());
    }
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Linear non-contrastive SSL dynamics: eigenvalue flows, training runs, downstream sweeps"};
    app.name("ncssl");
    app.require_subcommand(1, 1);

    std::string config_path;
    app.add_option("--config", config_path, "flat 'key = value' config file");
    std::map<std::string, std::string> flag_values;
    std::vector<std::pair<std::string, CLI::Option*>> flags;
    for (const auto& s : key_specs()) {
        std::string names = "--" + std::string(s.name);
        std::string dashed(s.name);
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        if (dashed != s.name) names += ",--" + dashed;
        std::string& slot = flag_values[std::string(s.name)];
        flags.emplace_back(std::string(s.name), app.add_option(names, slot, std::string(s.help)));
    }
    for (auto name : experiment_names())
        app.add_subcommand(std::string(name), fmt::format("run the {} experiment", name))->fallthrough();
    app.add_subcommand("run", "run the experiment named in the config")->fallthrough();
    CLI::App* verify = app.add_subcommand("verify-all", "run every acceptance check and report pass/fail");
    std::string mutate = "none", format = "text";
    verify->add_option("--mutate", mutate, "perturb a constant to check that the suite notices")
        ->check(CLI::IsMember({"none", "threshold"}));
    verify->add_option("--format", format, "report format")->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "verify-all") return verify_all(mutate, format, out);

    ExperimentConfig cfg;
    try {
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        if (sub != "run") {
            if (!cfg.is_default("experiment") && cfg.value("experiment") != sub)
                throw InvalidConfig(fmt::format("{}: experiment: config names '{}' but the subcommand is '{}'",
                                                cfg.origin("experiment"), cfg.value("experiment"), sub));
            cfg.set("experiment", sub, "subcommand");
        }
        if (const char* env = std::getenv(kOutputEnv.data()); env != nullptr && *env != '\0')
            cfg.set("output_dir", env, std::string(kOutputEnv));
        for (const auto& [name, opt] : flags)
            if (opt->count() > 0) cfg.set(name, flag_values[name], "--" + name);
        cfg.finalize();

        const RunOutput result = run_experiment(cfg);
        write_outputs(cfg.value("output_dir"), result);
        out << fmt::format("{}: {} ({} files in {}, config {})\n", cfg.value("experiment"),
                           result.passed ? "PASS" : "FAIL", result.files.size(), cfg.value("output_dir"),
                           cfg.hash_hex());
        for (const auto& f : result.failures) out << "  failed: " << f << '\n';
        return result.passed ? 0 : 1;
    } catch (const InvalidConfig& e) {
        err << "ncssl: invalid configuration: " << annotate(cfg, e.what()) << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "ncssl: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace ncssl::cli
