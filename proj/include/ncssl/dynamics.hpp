#pragma once

// Scalar eigenvalue dynamics of W under gradient flow on the population loss.
//
// Starting from W = delta * I every eigenvalue on S shares one value lambda_S
// and every eigenvalue on B shares lambda_B, so the matrix flow reduces to two
// decoupled scalar ODEs. Modes:
//   standard        W_p = (W W^T)^alpha
//   augmented_corr  W_p = (W E[x1 x1^T] W^T)^alpha
//   eps_reg         W_p = (W W^T)^alpha + eps I
//   deep            depth-l product network, lambda = (per-layer value)^l
//   diagonal        single coordinate with data scale mu and augmentation scale
//                   sigma_i; eta plays the role of the weight decay rho.
//                   Both trace lanes evolve that coordinate.

#include <optional>
#include <string_view>
#include <vector>

#include "ncssl/error.hpp"

namespace ncssl {

enum class FlowMode { standard, augmented_corr, eps_reg, deep, diagonal };

std::string_view to_string(FlowMode mode);
FlowMode parse_flow_mode(std::string_view name);

struct DynamicsConfig {
    double alpha = 1.0;
    double eta = 0.0;
    double sigma2 = 0.0;
    double delta = 1.0;
    FlowMode mode = FlowMode::standard;
    double eps = 0.0;  // eps_reg only
    int depth = 1;     // deep only
    double mu = 1.0;       // diagonal only
    double sigma_i = 0.0;  // diagonal only

    /// Throws InvalidConfig when a field is out of range or a mode-specific
    /// field is set away from its default in a mode that ignores it.
    void validate() const;
};

double rate_S(double lambda, const DynamicsConfig& cfg);
double rate_B(double lambda, const DynamicsConfig& cfg);

/// Non-negative stationary points of the single-layer S dynamics.
struct FixedPoints {
    bool collapse_only = false;  // eta > 1/4: zero is the only stationary point
    bool double_root = false;    // eta == 1/4: lambda_minus == lambda_plus
    double lambda_minus = 0.0;
    double lambda_plus = 0.0;
};

FixedPoints fixed_points(double alpha, double eta);

/// Weight decay above which the B eigenvalue (or diagonal coordinate) always
/// collapses. Only standard, augmented_corr and diagonal have one.
double collapse_threshold(const DynamicsConfig& cfg);

/// (eta_low, eta_high) window of the depth-l result and the lower end c_low of
/// the interval containing the limit; at alpha = 1/2, c_low = (3l-2)/(4l-2).
struct DeepWindow {
    double eta_low = 0.0;
    double eta_high = 0.0;
    double c_low = 0.0;
    double midpoint() const { return 0.5 * (eta_low + eta_high); }
};

DeepWindow deep_window(int depth, double alpha, double sigma2);

/// Positive stable root of the depth-l S dynamics in (c_low, 1), by bisection.
/// Returns nullopt when eta is at or above the window's upper end.
std::optional<double> deep_limit(int depth, double alpha, double eta);

/// Predicted lambda_S limit under predictor regularization eps;
/// 0 when eps >= (1 + sqrt(1 - 4 eta)) / 2. Requires 0 < eta < 1/4.
double eps_limit(double alpha, double eta, double eps);

/// Stable positive root of the diagonal coordinate, or nullopt when rho is at or
/// above the coordinate's threshold.
std::optional<double> diagonal_limit(double alpha, double mu, double sigma_i, double rho);

struct FlowTrace {
    std::vector<double> times;
    std::vector<double> lambda_S;
    std::vector<double> lambda_B;
    double dt = 0.0;
    std::string_view method = "rk4";
};

/// Classical fixed-step RK4 on (lambda_S, lambda_B) from delta over [0, T].
/// Produces floor(T/dt) + 1 points. Throws BlowUpError (carrying the time)
/// when |lambda| exceeds 1e6 or becomes non-finite.
FlowTrace integrate_flow(const DynamicsConfig& cfg, double T, double dt);

/// Terminal values plus the drift over the trailing `window` time units.
struct FlowSummary {
    double lambda_S = 0.0;
    double lambda_B = 0.0;
    double drift_S = 0.0;
    double drift_B = 0.0;
    bool settled(double tol = 1e-9) const { return drift_S <= tol && drift_B <= tol; }
};

FlowSummary summarize(const FlowTrace& trace, double window = 10.0);

}  // namespace ncssl
