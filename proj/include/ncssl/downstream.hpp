#pragma once

// Downstream linear regression through a learned representation P_hat.
//
// Inputs x ~ N(0, I_d), labels y = <x, w*> + xi with xi ~ N(0, beta^2) and w*
// a unit vector inside the rank-r subspace with projector P. The estimator is
// ridge regression on the transformed inputs P_hat x.

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "ncssl/linalg.hpp"

namespace ncssl {

struct DownstreamTask {
    Eigen::Index d = 0;
    Eigen::Index r = 0;
    Projector P;
    Vector w_star;
    double beta = 0.0;

    void validate() const;
};

/// P from haar_orthogonal(d, seed) (first r columns); w* a uniformly random unit
/// vector in that subspace drawn from split_seed(seed, 0).
DownstreamTask make_task(Eigen::Index d, Eigen::Index r, double beta, std::uint64_t seed,
                         bool axis_aligned = false);

struct DownstreamSample {
    Matrix X;  // n x d
    Vector y;
};

DownstreamSample sample_downstream(const DownstreamTask& task, Eigen::Index n, std::uint64_t seed);

struct RidgeSolution {
    Vector w_hat;
    double rho = 0.0;
    Eigen::Index n = 0;
    double residual = 0.0;  // ||(M + rho I) w_hat - b|| / max(||b||, tiny)
};

/// w_hat = ((1/n) P^T X^T X P + rho I)^{-1} (1/n) P^T X^T y, via Cholesky.
RidgeSolution ridge_closed_form(const Matrix& X, const Vector& y, const Matrix& P_hat, double rho);

/// ||P_hat w_hat - w*||.
double recovery_error(const Matrix& P_hat, const Vector& w_hat, const Vector& w_star);

/// Fixed ridge coefficient, or rho = eps^{1/3} with eps = ||P_hat - P||_F,
/// floored at 1e-10.
struct FixedRho {
    double rho;
};
struct CubeRootRho {};
using RhoRule = std::variant<FixedRho, CubeRootRho>;

double resolve_rho(const RhoRule& rule, const Matrix& P_hat, const Projector& P);

struct SweepRow {
    Eigen::Index n = 0;
    std::uint64_t seed = 0;
    double error = 0.0;           // ||P_hat w_hat - w*||
    double offspace_error = 0.0;  // ||w_hat - w*||, reported only
};

struct SweepAggregate {
    Eigen::Index n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation over seeds
};

struct ComplexitySweep {
    double rho = 0.0;
    std::vector<SweepRow> rows;  // n-major, then seed order
    std::vector<SweepAggregate> aggregate;
};

/// Data for (n, seed) come from sample_downstream(task, n, split_seed(seed, n)).
/// `workers` > 1 evaluates (n, seed) pairs concurrently; ordering is unaffected.
ComplexitySweep complexity_sweep(const DownstreamTask& task, const Matrix& P_hat, std::span<const Eigen::Index> n_list,
                                 std::span<const std::uint64_t> seeds, const RhoRule& rule, unsigned workers = 1);

/// Random perturbation with ||Delta||_F = eps exactly, from a Gaussian d x d matrix.
Matrix random_perturbation(Eigen::Index d, double eps, std::uint64_t seed);

}  // namespace ncssl
