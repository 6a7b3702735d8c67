#include "ncssl/downstream.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ncssl/parallel.hpp"
#include "ncssl/rng.hpp"

namespace ncssl {

namespace {
constexpr double kRhoFloor = 1e-10;
}

void DownstreamTask::validate() const {
    if (P.dim() != d || w_star.size() != d) throw InvalidConfig("downstream task: dimension mismatch");
    if (std::abs(w_star.norm() - 1.0) > 1e-10) throw InvalidConfig("downstream task: w* must have unit norm");
    if ((P.matrix() * w_star - w_star).norm() > 1e-10) throw InvalidConfig("downstream task: w* must lie in range(P)");
    if (!(beta >= 0.0)) throw InvalidConfig("downstream task: beta must be non-negative");
}

DownstreamTask make_task(Eigen::Index d, Eigen::Index r, double beta, std::uint64_t seed, bool axis_aligned) {
    if (d < 1 || r < 1 || r > d) throw InvalidConfig(fmt::format("make_task: need 1 <= r={} <= d={}", r, d));
    const Matrix q = axis_aligned ? Matrix::Identity(d, d) : haar_orthogonal(d, seed);
    const Matrix basis = q.leftCols(r);

    NormalStream stream(split_seed(seed, 0));
    Vector coef(r);
    for (Eigen::Index i = 0; i < r; ++i) coef(i) = stream.normal();

    DownstreamTask task;
    task.d = d;
    task.r = r;
    task.P = projector_from_basis(basis);
    task.w_star = basis * coef.normalized();
    task.w_star.normalize();
    task.beta = beta;
    task.validate();
    return task;
}

DownstreamSample sample_downstream(const DownstreamTask& task, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw InvalidConfig("sample_downstream: n must be at least 1");
    DownstreamSample s;
    s.X.resize(n, task.d);
    s.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        NormalStream stream(split_seed(seed, static_cast<std::uint64_t>(i)));
        for (Eigen::Index k = 0; k < task.d; ++k) s.X(i, k) = stream.normal();
        const double noise = stream.normal();
        s.y(i) = s.X.row(i).dot(task.w_star) + (task.beta == 0.0 ? 0.0 : task.beta * noise);
    }
    return s;
}

RidgeSolution ridge_closed_form(const Matrix& X, const Vector& y, const Matrix& P_hat, double rho) {
    if (!(rho > 0.0)) throw InvalidConfig("ridge_closed_form: rho must be positive");
    if (X.rows() != y.size() || X.cols() != P_hat.rows() || P_hat.rows() != P_hat.cols())
        throw InvalidDimension("ridge_closed_form: shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(X.rows());
    const Matrix Z = X * P_hat;
    Matrix M = inv_n * (Z.transpose() * Z);
    M = 0.5 * (M + M.transpose());
    const Vector b = inv_n * (Z.transpose() * y);
    M.diagonal().array() += rho;

    Eigen::LLT<Matrix> llt(M);
    if (llt.info() != Eigen::Success) throw DomainError("ridge_closed_form: system is not positive definite");
    RidgeSolution sol;
    sol.w_hat = llt.solve(b);
    // One refinement pass; tiny rho leaves the system badly conditioned.
    sol.w_hat += llt.solve(Vector(b - M * sol.w_hat));
    sol.rho = rho;
    sol.n = X.rows();
    sol.residual = (M * sol.w_hat - b).norm() / std::max(b.norm(), 1e-300);
    return sol;
}

double recovery_error(const Matrix& P_hat, const Vector& w_hat, const Vector& w_star) {
    return (P_hat * w_hat - w_star).norm();
}

double resolve_rho(const RhoRule& rule, const Matrix& P_hat, const Projector& P) {
    if (const auto* fixed = std::get_if<FixedRho>(&rule)) {
        if (!(fixed->rho > 0.0)) throw InvalidConfig("fixed rho must be positive");
        return fixed->rho;
    }
    const double eps = (P_hat - P.matrix()).norm();
    return std::max(std::cbrt(eps), kRhoFloor);
}

ComplexitySweep complexity_sweep(const DownstreamTask& task, const Matrix& P_hat, std::span<const Eigen::Index> n_list,
                                 std::span<const std::uint64_t> seeds, const RhoRule& rule, unsigned workers) {
    for (std::size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1]) throw InvalidConfig("complexity_sweep: n_list must be strictly ascending");
    if (seeds.empty()) throw InvalidConfig("complexity_sweep: no seeds");

    ComplexitySweep out;
    out.rho = resolve_rho(rule, P_hat, task.P);
    out.rows.resize(n_list.size() * seeds.size());
    parallel_for(out.rows.size(), workers, [&](std::size_t idx) {
        const Eigen::Index n = n_list[idx / seeds.size()];
        const std::uint64_t seed = seeds[idx % seeds.size()];
        const DownstreamSample s = sample_downstream(task, n, split_seed(seed, static_cast<std::uint64_t>(n)));
        const RidgeSolution sol = ridge_closed_form(s.X, s.y, P_hat, out.rho);
        out.rows[idx] = {n, seed, recovery_error(P_hat, sol.w_hat, task.w_star), (sol.w_hat - task.w_star).norm()};
    });

    for (std::size_t i = 0; i < n_list.size(); ++i) {
        double sum = 0.0, sq = 0.0;
        const std::size_t k = seeds.size();
        for (std::size_t j = 0; j < k; ++j) sum += out.rows[i * k + j].error;
        const double mean = sum / static_cast<double>(k);
        for (std::size_t j = 0; j < k; ++j) sq += std::pow(out.rows[i * k + j].error - mean, 2);
        out.aggregate.push_back({n_list[i], mean, k > 1 ? std::sqrt(sq / static_cast<double>(k - 1)) : 0.0});
    }
    return out;
}

Matrix random_perturbation(Eigen::Index d, double eps, std::uint64_t seed) {
    NormalStream stream(seed);
    Matrix delta(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) delta(i, j) = stream.normal();
    return delta * (eps / delta.norm());
}

}  // namespace ncssl
