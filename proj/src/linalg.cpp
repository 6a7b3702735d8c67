#include "ncssl/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "ncssl/rng.hpp"

namespace ncssl {

namespace {

constexpr double kPsdClamp = 1e-10;

double sym_tolerance(const Matrix& a, double rel_tol) {
    return rel_tol * std::max(1.0, a.norm());
}

}  // namespace

bool is_symmetric(const Matrix& a, double rel_tol) {
    if (a.rows() != a.cols()) return false;
    if (a.size() == 0) return true;
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= sym_tolerance(a, rel_tol);
}

SymMatrix::SymMatrix(const Matrix& entries) {
    if (entries.rows() != entries.cols())
        throw InvalidDimension("SymMatrix: matrix is not square");
    if (!is_symmetric(entries))
        throw PreconditionError("SymMatrix: matrix is not symmetric");
    a_ = 0.5 * (entries + entries.transpose());
}

SymMatrix SymMatrix::symmetrized(const Matrix& entries) {
    if (entries.rows() != entries.cols())
        throw InvalidDimension("SymMatrix: matrix is not square");
    return SymMatrix(0.5 * (entries + entries.transpose()), Unchecked{});
}

Projector Projector::complement() const {
    const Eigen::Index d = dim();
    Matrix c = Matrix::Identity(d, d) - p_;
    return Projector(0.5 * (c + c.transpose()), d - rank_);
}

Matrix haar_orthogonal(Eigen::Index d, std::uint64_t seed) {
    if (d < 1) throw InvalidDimension("haar_orthogonal: dimension must be at least 1");
    NormalStream stream(seed);
    Matrix g(d, d);
    // Row-major fill so the stream order does not depend on Eigen's storage.
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) g(i, j) = stream.normal();

    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, d);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

Projector projector_from_basis(const Matrix& basis) {
    const Eigen::Index r = basis.cols();
    if (r > basis.rows())
        throw InvalidDimension("projector_from_basis: more columns than rows");
    const Matrix gram = basis.transpose() * basis;
    if ((gram - Matrix::Identity(r, r)).norm() > 1e-8)
        throw PreconditionError("projector_from_basis: columns are not orthonormal");
    Matrix p = basis * basis.transpose();
    return Projector(0.5 * (p + p.transpose()), r);
}

EigenPair sym_eig(const SymMatrix& a) {
    const Eigen::Index d = a.dim();
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a.matrix());
    if (solver.info() != Eigen::Success)
        throw DomainError("sym_eig: eigensolver did not converge");

    EigenPair out;
    out.values = solver.eigenvalues().reverse();
    out.vectors = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index j = 0; j < d; ++j) {
        auto col = out.vectors.col(j);
        for (Eigen::Index i = 0; i < d; ++i) {
            if (col(i) != 0.0) {
                if (col(i) < 0.0) col = -col;
                break;
            }
        }
    }
    return out;
}

SymMatrix psd_power(const SymMatrix& a, double alpha) {
    if (!(alpha > 0.0)) throw DomainError("psd_power: exponent must be positive");
    const EigenPair eig = sym_eig(a);
    Vector mapped(eig.values.size());
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        double v = eig.values(i);
        if (v < -kPsdClamp) throw NotPsdError("psd_power: matrix has a negative eigenvalue");
        mapped(i) = v <= 0.0 ? 0.0 : std::pow(v, alpha);
    }
    return SymMatrix::symmetrized(eig.vectors * mapped.asDiagonal() * eig.vectors.transpose());
}

double op_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

double op_norm(const SymMatrix& a) {
    if (a.dim() == 0) return 0.0;
    return sym_eig(a).values.cwiseAbs().maxCoeff();
}

double fro_norm(const Matrix& a) { return a.norm(); }

}  // namespace ncssl
