#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ncssl/linalg.hpp"
#include "ncssl/rng.hpp"

using namespace ncssl;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    NormalStream s(seed);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = s.normal();
    return m;
}

Matrix random_sym(Eigen::Index d, std::uint64_t seed) {
    const Matrix g = gaussian(d, d, seed);
    return 0.5 * (g + g.transpose());
}

Matrix random_psd(Eigen::Index d, std::uint64_t seed) {
    const Matrix g = gaussian(d, d, seed);
    return g * g.transpose() / static_cast<double>(d);
}

Matrix diag(std::initializer_list<double> v) {
    Vector x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) x(i++) = e;
    return x.asDiagonal();
}

}  // namespace

TEST_CASE("SymMatrix accepts symmetric input and rejects the rest") {
    Matrix a = random_sym(4, 1);
    CHECK_NOTHROW(SymMatrix{a});
    a(0, 1) += 1e-6;
    CHECK_THROWS_AS(SymMatrix{a}, PreconditionError);
    CHECK_THROWS_AS(SymMatrix{Matrix(2, 3)}, InvalidDimension);
    // tolerance scales with the Frobenius norm
    Matrix big = 1e6 * random_sym(3, 2);
    big(0, 2) += 1e-8;
    CHECK(is_symmetric(big));
    CHECK_NOTHROW(SymMatrix{big});
}

TEST_CASE("haar_orthogonal") {
    SUBCASE("d = 1 is +-1") {
        for (std::uint64_t seed : {0u, 1u, 99u}) {
            const Matrix q = haar_orthogonal(1, seed);
            CHECK(std::abs(std::abs(q(0, 0)) - 1.0) <= 1e-15);
        }
    }
    SUBCASE("orthogonal and deterministic") {
        const Matrix q = haar_orthogonal(5, 7);
        CHECK((q.transpose() * q - Matrix::Identity(5, 5)).norm() <= 1e-10);
        CHECK(q == haar_orthogonal(5, 7));
        CHECK(q != haar_orthogonal(5, 8));
    }
    SUBCASE("d = 0 rejected") { CHECK_THROWS_AS(haar_orthogonal(0, 1), InvalidDimension); }
    SUBCASE("orthogonal for many seeds and sizes") {
        for (Eigen::Index d : {2, 3, 8, 33})
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                const Matrix q = haar_orthogonal(d, seed);
                CHECK((q.transpose() * q - Matrix::Identity(d, d)).norm() <= 1e-10);
            }
    }
    SUBCASE("first column is uniform on the sphere") {
        // E[q_11^2] = 1/d and E[q_11] = 0 under the Haar measure
        constexpr int trials = 4000;
        constexpr Eigen::Index d = 4;
        double mean = 0.0, sq = 0.0;
        for (int t = 0; t < trials; ++t) {
            const double v = haar_orthogonal(d, 10000 + t)(0, 0);
            mean += v;
            sq += v * v;
        }
        mean /= trials;
        sq /= trials;
        CHECK(std::abs(mean) <= 0.03);
        CHECK(std::abs(sq - 1.0 / d) <= 0.02);
    }
}

TEST_CASE("projector_from_basis") {
    SUBCASE("axis-aligned basis gives a 0/1 diagonal") {
        const Matrix U = Matrix::Identity(5, 5).leftCols(2);
        const Projector P = projector_from_basis(U);
        CHECK(P.matrix() == diag({1, 1, 0, 0, 0}));
        CHECK(P.rank() == 2);
        CHECK(P.complement().matrix() == diag({0, 0, 1, 1, 1}));
        CHECK(P.complement().rank() == 3);
    }
    SUBCASE("full orthogonal basis gives the identity") {
        const Projector P = projector_from_basis(haar_orthogonal(6, 3));
        CHECK((P.matrix() - Matrix::Identity(6, 6)).norm() <= 1e-12);
        CHECK(P.rank() == 6);
    }
    SUBCASE("trace equals rank") {
        const Projector P = projector_from_basis(haar_orthogonal(5, 0).leftCols(2));
        CHECK(std::abs(P.matrix().trace() - 2.0) <= 1e-8);
    }
    SUBCASE("non-orthonormal basis rejected") {
        Matrix U = haar_orthogonal(4, 2).leftCols(2);
        U(0, 0) += 1e-6;
        CHECK_THROWS_AS(projector_from_basis(U), PreconditionError);
        CHECK_THROWS_AS(projector_from_basis(2.0 * Matrix::Identity(3, 1)), PreconditionError);
    }
    SUBCASE("idempotent and symmetric for 100 seeds") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const Eigen::Index d = 2 + static_cast<Eigen::Index>(seed % 7);
            const Eigen::Index r = 1 + static_cast<Eigen::Index>(seed % static_cast<std::uint64_t>(d));
            const Projector P = projector_from_basis(haar_orthogonal(d, seed).leftCols(r));
            const Matrix& p = P.matrix();
            CHECK((p * p - p).norm() <= 1e-10);
            CHECK((p - p.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
            CHECK(std::abs(p.trace() - static_cast<double>(r)) <= 1e-8);
            CHECK((P.complement().matrix() + p - Matrix::Identity(d, d)).norm() <= 1e-12);
        }
    }
}

TEST_CASE("sym_eig") {
    SUBCASE("identity") {
        const EigenPair e = sym_eig(SymMatrix(Matrix::Identity(3, 3)));
        CHECK((e.values - Vector::Ones(3)).norm() == 0.0);
    }
    SUBCASE("diagonal values come back descending") {
        const EigenPair e = sym_eig(SymMatrix(diag({3, -1, 2})));
        CHECK(e.values(0) == doctest::Approx(3.0).epsilon(1e-15));
        CHECK(e.values(1) == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(e.values(2) == doctest::Approx(-1.0).epsilon(1e-15));
    }
    SUBCASE("construct-then-decompose round trip") {
        const Matrix Q = haar_orthogonal(2, 5);
        const Matrix A = Q * diag({5, 1}) * Q.transpose();
        const EigenPair e = sym_eig(SymMatrix::symmetrized(A));
        CHECK(std::abs(e.values(0) - 5.0) <= 1e-10);
        CHECK(std::abs(e.values(1) - 1.0) <= 1e-10);
        // eigenvectors match the construction up to sign
        CHECK(std::abs(std::abs(e.vectors.col(0).dot(Q.col(0))) - 1.0) <= 1e-10);
    }
    SUBCASE("sign convention: first nonzero component positive") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const EigenPair e = sym_eig(SymMatrix(random_sym(5, seed)));
            for (Eigen::Index j = 0; j < 5; ++j) {
                Eigen::Index i = 0;
                while (std::abs(e.vectors(i, j)) <= 1e-14) ++i;
                CHECK(e.vectors(i, j) > 0.0);
            }
        }
    }
    SUBCASE("deterministic") {
        const SymMatrix A(random_sym(7, 3));
        const EigenPair a = sym_eig(A), b = sym_eig(A);
        CHECK(a.values == b.values);
        CHECK(a.vectors == b.vectors);
    }
    SUBCASE("reconstruction and orthogonality up to d = 64") {
        for (Eigen::Index d : {1, 2, 5, 16, 64}) {
            for (std::uint64_t seed = 0; seed < 3; ++seed) {
                const Matrix A = random_sym(d, 100 * d + seed);
                const EigenPair e = sym_eig(SymMatrix(A));
                const Matrix rec = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
                CHECK((rec - A).norm() <= 1e-8 * std::max(1.0, A.norm()));
                CHECK((e.vectors.transpose() * e.vectors - Matrix::Identity(d, d)).norm() <= 1e-10);
                for (Eigen::Index i = 1; i < d; ++i) CHECK(e.values(i - 1) >= e.values(i));
            }
        }
    }
}

TEST_CASE("psd_power") {
    SUBCASE("identity is a fixed point") {
        CHECK((psd_power(SymMatrix(Matrix::Identity(4, 4)), 0.5).matrix() - Matrix::Identity(4, 4)).norm() <= 1e-14);
    }
    SUBCASE("square root of a diagonal") {
        const Matrix r = psd_power(SymMatrix(diag({4, 9})), 0.5).matrix();
        CHECK((r - diag({2, 3})).norm() <= 1e-14);
    }
    SUBCASE("power 2 matches the matrix product") {
        const Matrix Q = haar_orthogonal(2, 21);
        const Matrix A = Q * diag({4, 0.25}) * Q.transpose();
        const Matrix sq = psd_power(SymMatrix::symmetrized(A), 2.0).matrix();
        CHECK((sq - A * A).norm() <= 1e-10);
        CHECK((sq - Q * diag({16, 0.0625}) * Q.transpose()).norm() <= 1e-10);
    }
    SUBCASE("power 1 is the identity map") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Matrix A = random_psd(6, seed);
            CHECK((psd_power(SymMatrix::symmetrized(A), 1.0).matrix() - A).norm() <= 1e-10);
        }
    }
    SUBCASE("composition of powers") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            NormalStream s(split_seed(seed, 77));
            const double a = 0.1 + 2.0 * s.uniform(), b = 0.1 + 2.0 * s.uniform();
            const SymMatrix A = SymMatrix::symmetrized(random_psd(5, seed) + 0.1 * Matrix::Identity(5, 5));
            const Matrix lhs = psd_power(psd_power(A, a), b).matrix();
            const Matrix rhs = psd_power(A, a * b).matrix();
            CHECK((lhs - rhs).norm() <= 1e-8 * std::max(1.0, rhs.norm()));
        }
    }
    SUBCASE("tiny negative eigenvalues clamp to zero") {
        const Matrix r = psd_power(SymMatrix(diag({1.0, -5e-11})), 0.5).matrix();
        CHECK(r(1, 1) == 0.0);
        CHECK(r(0, 0) == doctest::Approx(1.0));
        // a rank-deficient correlation (eigenvalue exactly 0 up to round-off) works
        const Matrix v = gaussian(4, 1, 3);
        CHECK_NOTHROW(psd_power(SymMatrix::symmetrized(v * v.transpose()), 0.5));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(psd_power(SymMatrix(diag({1.0, -1e-9})), 0.5), NotPsdError);
        CHECK_THROWS_AS(psd_power(SymMatrix(Matrix::Identity(2, 2)), 0.0), DomainError);
        CHECK_THROWS_AS(psd_power(SymMatrix(Matrix::Identity(2, 2)), -1.0), DomainError);
    }
}

TEST_CASE("norms") {
    const Matrix I = Matrix::Identity(3, 3);
    CHECK(op_norm(I) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(op_norm(SymMatrix(I)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fro_norm(I) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
    CHECK(op_norm(diag({2, -5})) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(op_norm(SymMatrix(diag({2, -5}))) == doctest::Approx(5.0).epsilon(1e-14));
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Matrix A = gaussian(4, 4, seed);
        CHECK(op_norm(A) <= fro_norm(A) + 1e-12);
        // op norm of a general matrix is its largest singular value
        const Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A);
        CHECK(op_norm(A) == doctest::Approx(std::sqrt(es.eigenvalues().maxCoeff())).epsilon(1e-10));
    }
    // non-square
    CHECK(op_norm(Matrix::Ones(2, 3)) == doctest::Approx(std::sqrt(6.0)).epsilon(1e-14));
}

TEST_CASE("split_seed and NormalStream") {
    CHECK(split_seed(1, 2) == split_seed(1, 2));
    CHECK(split_seed(1, 2) != split_seed(2, 1));
    CHECK(split_seed(0, 0) != split_seed(0, 1));
    NormalStream a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    NormalStream s(123);
    constexpr int n = 200000;
    double mean = 0.0, sq = 0.0;
    bool open_interval = true;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        open_interval = open_interval && u > 0.0 && u < 1.0;
        const double z = s.normal();
        mean += z;
        sq += z * z;
    }
    CHECK(open_interval);
    mean /= n;
    sq /= n;
    CHECK(std::abs(mean) <= 0.01);
    CHECK(std::abs(sq - 1.0) <= 0.02);
}
