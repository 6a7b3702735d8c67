#pragma once

// End-to-end checks of every theorem-level property at desk scale. Shared by
// the acceptance test binary and `ncssl verify-all`.

#include <functional>
#include <string>
#include <vector>

#include "ncssl/linalg.hpp"

namespace ncssl::acceptance {

struct Options {
    /// Multiplies the predicted B-collapse threshold used by the threshold
    /// dichotomy check. Anything but 1 should make that check fail.
    double b_threshold_scale = 1.0;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;  // deterministic; no timings
    double seconds = 0.0;
    double budget_seconds = 0.0;
    bool within_budget() const { return seconds < budget_seconds; }
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<CriterionResult(const Options&)> run;
};

const std::vector<Criterion>& criteria();

/// Runs one criterion and fills in timing.
CriterionResult run_criterion(const Criterion& c, const Options& opts);

std::vector<CriterionResult> run_all(const Options& opts = {});

/// "PASS  3 threshold dichotomy: ..." ; no timing, so output is reproducible.
std::string format_line(const CriterionResult& r);

// Independent oracle for the ridge minimizer: plain gradient descent on
// (1/2n)||X P w - y||^2 + (rho/2)||w||^2 until the gradient norm is <= tol.
Vector ridge_gd_oracle(const Matrix& X, const Vector& y, const Matrix& P_hat, double rho, double tol = 1e-13);

}  // namespace ncssl::acceptance
