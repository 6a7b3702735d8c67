#include "ncssl/dynamics.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

namespace ncssl {

namespace {

constexpr double kBlowUp = 1e6;

void check_finite(double lambda) {
    if (std::isnan(lambda)) throw DomainError("rate: lambda is NaN");
}

// lambda * (-lead * q^2 + q - eta) with q = |lambda|^{2 alpha} + eps, scaled by
// depth and by |lambda|^{2 - 2/l} in the deep case. Written so that depth = 1
// and eps = 0 reduce to exactly the same floating-point operations.
double layered_rate(double lambda, double alpha, double eta, double lead, double eps, int depth) {
    const double mag = std::abs(lambda);
    const double q = std::pow(mag, 2.0 * alpha) + eps;
    const double s = depth == 1 ? 1.0 : std::pow(mag, 2.0 - 2.0 / depth);
    return depth * lambda * (-lead * s * q * q + s * q - eta);
}

double diagonal_rate(double lambda, const DynamicsConfig& cfg) {
    const double a = std::pow(std::abs(lambda), cfg.alpha);
    const double mu2 = cfg.mu * cfg.mu;
    const double quad = mu2 * mu2 + mu2 * cfg.sigma_i * cfg.sigma_i;
    return lambda * (mu2 * cfg.mu * a - quad * a * a - cfg.eta);
}

}  // namespace

std::string_view to_string(FlowMode mode) {
    switch (mode) {
        case FlowMode::standard: return "standard";
        case FlowMode::augmented_corr: return "augmented_corr";
        case FlowMode::eps_reg: return "eps_reg";
        case FlowMode::deep: return "deep";
        case FlowMode::diagonal: return "diagonal";
    }
    return "unknown";
}

FlowMode parse_flow_mode(std::string_view name) {
    for (FlowMode m : {FlowMode::standard, FlowMode::augmented_corr, FlowMode::eps_reg, FlowMode::deep,
                       FlowMode::diagonal})
        if (to_string(m) == name) return m;
    throw InvalidConfig(fmt::format("unknown flow mode '{}'", name));
}

void DynamicsConfig::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidConfig("alpha must be positive");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidConfig("eta must be non-negative");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw InvalidConfig("sigma2 must be non-negative");
    if (!std::isfinite(delta)) throw InvalidConfig("delta must be finite");
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidConfig("eps must be non-negative");
    if (depth < 1) throw InvalidConfig("depth must be at least 1");
    if (mode != FlowMode::eps_reg && eps != 0.0) throw InvalidConfig("eps is only used in eps_reg mode");
    if (mode != FlowMode::deep && depth != 1) throw InvalidConfig("depth is only used in deep mode");
    if (mode == FlowMode::diagonal) {
        if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidConfig("mu must be positive");
        if (!(sigma_i >= 0.0) || !std::isfinite(sigma_i)) throw InvalidConfig("sigma_i must be non-negative");
    } else if (mu != 1.0 || sigma_i != 0.0) {
        throw InvalidConfig("mu and sigma_i are only used in diagonal mode");
    }
}

double rate_S(double lambda, const DynamicsConfig& cfg) {
    check_finite(lambda);
    switch (cfg.mode) {
        case FlowMode::standard:
        case FlowMode::augmented_corr: return layered_rate(lambda, cfg.alpha, cfg.eta, 1.0, 0.0, 1);
        case FlowMode::eps_reg: return layered_rate(lambda, cfg.alpha, cfg.eta, 1.0, cfg.eps, 1);
        case FlowMode::deep: return layered_rate(lambda, cfg.alpha, cfg.eta, 1.0, 0.0, cfg.depth);
        case FlowMode::diagonal: return diagonal_rate(lambda, cfg);
    }
    return 0.0;
}

double rate_B(double lambda, const DynamicsConfig& cfg) {
    check_finite(lambda);
    const double lead = 1.0 + cfg.sigma2;
    switch (cfg.mode) {
        case FlowMode::standard: return layered_rate(lambda, cfg.alpha, cfg.eta, lead, 0.0, 1);
        case FlowMode::augmented_corr:
            return layered_rate(lambda, cfg.alpha, cfg.eta, std::pow(lead, 1.0 + 2.0 * cfg.alpha), 0.0, 1);
        case FlowMode::eps_reg: return layered_rate(lambda, cfg.alpha, cfg.eta, lead, cfg.eps, 1);
        case FlowMode::deep: return layered_rate(lambda, cfg.alpha, cfg.eta, lead, 0.0, cfg.depth);
        case FlowMode::diagonal: return diagonal_rate(lambda, cfg);
    }
    return 0.0;
}

FixedPoints fixed_points(double alpha, double eta) {
    if (!(alpha > 0.0)) throw InvalidConfig("fixed_points: alpha must be positive");
    if (!(eta >= 0.0)) throw InvalidConfig("fixed_points: eta must be non-negative");
    FixedPoints fp;
    const double disc = 1.0 - 4.0 * eta;
    if (disc < 0.0) {
        fp.collapse_only = true;
        return fp;
    }
    const double root = std::sqrt(disc);
    const double inv = 1.0 / (2.0 * alpha);
    fp.double_root = disc == 0.0;
    fp.lambda_minus = std::pow(0.5 * (1.0 - root), inv);
    fp.lambda_plus = std::pow(0.5 * (1.0 + root), inv);
    return fp;
}

double collapse_threshold(const DynamicsConfig& cfg) {
    switch (cfg.mode) {
        case FlowMode::standard: return 1.0 / (4.0 * (1.0 + cfg.sigma2));
        case FlowMode::augmented_corr: return 1.0 / (4.0 * std::pow(1.0 + cfg.sigma2, 1.0 + 2.0 * cfg.alpha));
        case FlowMode::diagonal: {
            const double mu2 = cfg.mu * cfg.mu;
            return mu2 * mu2 / (4.0 * (mu2 + cfg.sigma_i * cfg.sigma_i));
        }
        case FlowMode::eps_reg:
        case FlowMode::deep: break;
    }
    throw UnsupportedError(
        fmt::format("collapse_threshold: no closed-form threshold in {} mode (see deep_window)", to_string(cfg.mode)));
}

DeepWindow deep_window(int depth, double alpha, double sigma2) {
    if (depth < 1) throw InvalidConfig("deep_window: depth must be at least 1");
    if (!(alpha > 0.0)) throw InvalidConfig("deep_window: alpha must be positive");
    const double l = depth;
    const double num = 2.0 * alpha * l + 2.0 * l - 2.0;
    const double den = 4.0 * alpha * l + 2.0 * l - 2.0;
    const double e = 1.0 + 1.0 / alpha - 1.0 / (alpha * l);
    DeepWindow w;
    w.eta_high = 2.0 * alpha * l * std::pow(num, e) / std::pow(den, e + 1.0);
    w.eta_low = w.eta_high / std::pow(1.0 + sigma2, e);
    w.c_low = std::pow(num / den, 1.0 / (2.0 * alpha));
    return w;
}

std::optional<double> deep_limit(int depth, double alpha, double eta) {
    const DeepWindow w = deep_window(depth, alpha, 0.0);
    if (!(eta < w.eta_high)) return std::nullopt;
    const double l = depth;
    const auto h = [&](double x) {
        return -std::pow(x, 4.0 * alpha + 2.0 - 2.0 / l) + std::pow(x, 2.0 * alpha + 2.0 - 2.0 / l) - eta;
    };
    double lo = w.c_low, hi = 1.0;  // h(lo) > 0 > h(hi)
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (h(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double eps_limit(double alpha, double eta, double eps) {
    if (!(eta > 0.0 && eta < 0.25))
        throw UnsupportedError("eps_limit: only characterized for weight decay in (0, 1/4)");
    if (!(alpha > 0.0)) throw InvalidConfig("eps_limit: alpha must be positive");
    if (!(eps >= 0.0)) throw InvalidConfig("eps_limit: eps must be non-negative");
    const double upper = 0.5 * (1.0 + std::sqrt(1.0 - 4.0 * eta));
    if (eps >= upper) return 0.0;
    return std::pow(upper - eps, 1.0 / (2.0 * alpha));
}

std::optional<double> diagonal_limit(double alpha, double mu, double sigma_i, double rho) {
    if (!(mu > 0.0)) throw InvalidConfig("diagonal_limit: mu must be positive");
    const double mu2 = mu * mu;
    const double disc = mu2 * mu2 - 4.0 * rho * (mu2 + sigma_i * sigma_i);
    if (!(disc > 0.0)) return std::nullopt;
    const double a = (mu2 + std::sqrt(disc)) / (2.0 * (mu2 * mu + mu * sigma_i * sigma_i));
    return std::pow(a, 1.0 / alpha);
}

FlowTrace integrate_flow(const DynamicsConfig& cfg, double T, double dt) {
    cfg.validate();
    if (!(dt > 0.0)) throw InvalidConfig("integrate_flow: dt must be positive");
    if (!(T >= dt)) throw InvalidConfig("integrate_flow: horizon must be at least one step");
    const auto steps = static_cast<std::size_t>(std::floor(T / dt + 1e-9));

    FlowTrace tr;
    tr.dt = dt;
    tr.times.reserve(steps + 1);
    tr.lambda_S.reserve(steps + 1);
    tr.lambda_B.reserve(steps + 1);

    const auto rk4 = [dt, &cfg](double y, double (*f)(double, const DynamicsConfig&)) {
        const double k1 = f(y, cfg);
        const double k2 = f(y + 0.5 * dt * k1, cfg);
        const double k3 = f(y + 0.5 * dt * k2, cfg);
        const double k4 = f(y + dt * k3, cfg);
        return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };

    double s = cfg.delta, b = cfg.delta;
    tr.times.push_back(0.0);
    tr.lambda_S.push_back(s);
    tr.lambda_B.push_back(b);
    for (std::size_t k = 1; k <= steps; ++k) {
        s = rk4(s, rate_S);
        b = rk4(b, rate_B);
        const double t = static_cast<double>(k) * dt;
        if (!(std::abs(s) <= kBlowUp) || !(std::abs(b) <= kBlowUp))
            throw BlowUpError(fmt::format("integrate_flow: eigenvalue diverged at t={}", t), t);
        tr.times.push_back(t);
        tr.lambda_S.push_back(s);
        tr.lambda_B.push_back(b);
    }
    return tr;
}

FlowSummary summarize(const FlowTrace& trace, double window) {
    FlowSummary out;
    if (trace.times.empty()) return out;
    const std::size_t last = trace.times.size() - 1;
    const auto back = static_cast<std::size_t>(std::llround(window / trace.dt));
    const std::size_t ref = back > last ? 0 : last - back;
    out.lambda_S = trace.lambda_S[last];
    out.lambda_B = trace.lambda_B[last];
    out.drift_S = std::abs(trace.lambda_S[last] - trace.lambda_S[ref]);
    out.drift_B = std::abs(trace.lambda_B[last] - trace.lambda_B[ref]);
    return out;
}

}  // namespace ncssl
