#pragma once

// Dense real symmetric linear algebra used throughout the library.
// Everything is double precision and dense; dimensions stay in the hundreds.

#include <cstdint>

#include <Eigen/Dense>

#include "ncssl/error.hpp"

namespace ncssl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A real symmetric matrix. Construction checks symmetry to
/// 1e-12 * max(1, ||A||_F) and stores the exactly symmetrized entries.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Matrix& entries);

    /// Symmetrizes (A + A^T)/2 without checking; for matrices that are
    /// symmetric in exact arithmetic but carry round-off.
    static SymMatrix symmetrized(const Matrix& entries);

    const Matrix& matrix() const noexcept { return a_; }
    Eigen::Index dim() const noexcept { return a_.rows(); }

private:
    struct Unchecked {};
    SymMatrix(Matrix entries, Unchecked) : a_(std::move(entries)) {}
    Matrix a_;
};

/// Orthogonal projector onto a subspace, together with its rank.
class Projector {
public:
    Projector() = default;

    const Matrix& matrix() const noexcept { return p_; }
    Eigen::Index rank() const noexcept { return rank_; }
    Eigen::Index dim() const noexcept { return p_.rows(); }

    /// I - P, the projector onto the orthogonal complement.
    Projector complement() const;

private:
    friend Projector projector_from_basis(const Matrix& basis);
    Projector(Matrix p, Eigen::Index rank) : p_(std::move(p)), rank_(rank) {}

    Matrix p_;
    Eigen::Index rank_ = 0;
};

/// Eigenvalues in descending order; columns of `vectors` are the matching
/// eigenvectors, each with its first nonzero component positive.
struct EigenPair {
    Vector values;
    Matrix vectors;
};

bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);

/// Haar-distributed orthogonal matrix from QR of an i.i.d. Gaussian matrix,
/// with column signs fixed so that R has a positive diagonal.
Matrix haar_orthogonal(Eigen::Index d, std::uint64_t seed);

/// P = U U^T for U with orthonormal columns (checked to 1e-8).
Projector projector_from_basis(const Matrix& basis);

EigenPair sym_eig(const SymMatrix& a);

/// A^alpha for PSD A. Eigenvalues in [-1e-10, 0) are clamped to zero;
/// anything more negative raises NotPsdError.
SymMatrix psd_power(const SymMatrix& a, double alpha);

/// Largest singular value.
double op_norm(const Matrix& a);
/// max |eigenvalue|; equal to the general op_norm for symmetric input.
double op_norm(const SymMatrix& a);
double fro_norm(const Matrix& a);

}  // namespace ncssl
