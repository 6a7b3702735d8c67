#pragma once

// Gaussian inputs with subspace-structured augmentations.
//
// x ~ N(0, I_d); each view is x1 = x + z1, x2 = x + z2 with z1, z2 drawn
// independently from N(0, sigma2 * P_B). B is the nuisance subspace, S its
// orthogonal complement (the invariant subspace).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ncssl/linalg.hpp"

namespace ncssl {

struct AugmentationModel {
    Eigen::Index d = 0;
    Eigen::Index r = 0;
    double sigma2 = 0.0;
    Matrix basis_S;  // d x r
    Matrix basis_B;  // d x (d - r)
    Projector P_S;
    Projector P_B;

    /// E[x1 x1^T] = I + sigma2 P_B.
    Matrix view_corr() const;
};

/// Subspaces from haar_orthogonal(d, seed): the first r columns span S, the rest
/// span B. With `axis_aligned` the rotation is the identity and seed is unused.
AugmentationModel make_model(Eigen::Index d, Eigen::Index r, double sigma2, std::uint64_t seed,
                             bool axis_aligned = false);

/// Rows are samples.
struct SampleSet {
    Matrix x;
    Matrix x1;
    Matrix x2;
    Eigen::Index n = 0;
    std::uint64_t seed = 0;
};

/// Row i draws from its own stream split_seed(seed, i): d normals for x, then
/// d - r for z1 and d - r for z2 in B coordinates, rotated by basis_B.
SampleSet sample_triples(const AugmentationModel& model, Eigen::Index n, std::uint64_t seed);

struct CorrSet {
    Matrix C11;  // (1/n) sum x1 x1^T (symmetrized)
    Matrix C12;  // (1/n) sum x1 x2^T (general)
    Matrix C00;  // (1/n) sum x x^T (symmetrized)
};

CorrSet empirical_corr(const SampleSet& samples);

struct ConcentrationRow {
    Eigen::Index n = 0;
    std::uint64_t seed = 0;
    double err_c11 = 0.0;  // ||C11 - (I + sigma2 P_B)||_op
    double err_c12 = 0.0;  // ||C12 - I||_op
    double err_c00 = 0.0;  // ||C00 - I||_op
};

/// One row per (n, seed), n-major. n_list must be non-empty and ascending.
std::vector<ConcentrationRow> concentration_sweep(const AugmentationModel& model,
                                                  std::span<const Eigen::Index> n_list,
                                                  std::span<const std::uint64_t> seeds);

/// Flat CSV dump for comparison against other implementations:
///   line 1: "d,r,n,sigma2,seed", line 2: their values,
///   line 3: "view,row,c0,...,c{d-1}", then rows for view x, x1, x2 in that order.
void write_samples_csv(std::ostream& out, const AugmentationModel& model, const SampleSet& samples);

struct SampleDump {
    Eigen::Index d = 0;
    Eigen::Index r = 0;
    double sigma2 = 0.0;
    SampleSet samples;
};

SampleDump read_samples_csv(std::istream& in);

}  // namespace ncssl
