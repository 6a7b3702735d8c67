#include "ncssl/data.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "ncssl/csv.hpp"
#include "ncssl/rng.hpp"

namespace ncssl {

Matrix AugmentationModel::view_corr() const {
    return Matrix::Identity(d, d) + sigma2 * P_B.matrix();
}

AugmentationModel make_model(Eigen::Index d, Eigen::Index r, double sigma2, std::uint64_t seed,
                             bool axis_aligned) {
    if (d < 1) throw InvalidConfig("make_model: d must be at least 1");
    if (r < 1 || r > d) throw InvalidConfig(fmt::format("make_model: r={} outside [1, d={}]", r, d));
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
        throw InvalidConfig("make_model: sigma2 must be a finite non-negative number");

    const Matrix q = axis_aligned ? Matrix::Identity(d, d) : haar_orthogonal(d, seed);
    AugmentationModel m;
    m.d = d;
    m.r = r;
    m.sigma2 = sigma2;
    m.basis_S = q.leftCols(r);
    m.basis_B = q.rightCols(d - r);
    m.P_S = projector_from_basis(m.basis_S);
    m.P_B = projector_from_basis(m.basis_B);
    return m;
}

SampleSet sample_triples(const AugmentationModel& model, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw InvalidConfig("sample_triples: n must be at least 1");
    const Eigen::Index d = model.d;
    const Eigen::Index nb = d - model.r;
    const double sigma = std::sqrt(model.sigma2);

    SampleSet s;
    s.n = n;
    s.seed = seed;
    s.x.resize(n, d);
    s.x1.resize(n, d);
    s.x2.resize(n, d);

    Vector x(d), g1(nb), g2(nb);
    for (Eigen::Index i = 0; i < n; ++i) {
        NormalStream stream(split_seed(seed, static_cast<std::uint64_t>(i)));
        for (Eigen::Index k = 0; k < d; ++k) x(k) = stream.normal();
        for (Eigen::Index k = 0; k < nb; ++k) g1(k) = stream.normal();
        for (Eigen::Index k = 0; k < nb; ++k) g2(k) = stream.normal();
        s.x.row(i) = x.transpose();
        if (nb == 0 || sigma == 0.0) {
            s.x1.row(i) = x.transpose();
            s.x2.row(i) = x.transpose();
        } else {
            s.x1.row(i) = (x + model.basis_B * (sigma * g1)).transpose();
            s.x2.row(i) = (x + model.basis_B * (sigma * g2)).transpose();
        }
    }
    return s;
}

CorrSet empirical_corr(const SampleSet& samples) {
    if (samples.n < 1) throw InvalidConfig("empirical_corr: empty sample set");
    const double inv_n = 1.0 / static_cast<double>(samples.n);
    CorrSet c;
    Matrix c11 = inv_n * (samples.x1.transpose() * samples.x1);
    Matrix c00 = inv_n * (samples.x.transpose() * samples.x);
    c.C11 = 0.5 * (c11 + c11.transpose());
    c.C00 = 0.5 * (c00 + c00.transpose());
    c.C12 = inv_n * (samples.x1.transpose() * samples.x2);
    return c;
}

std::vector<ConcentrationRow> concentration_sweep(const AugmentationModel& model,
                                                  std::span<const Eigen::Index> n_list,
                                                  std::span<const std::uint64_t> seeds) {
    if (n_list.empty()) throw InvalidConfig("concentration_sweep: n_list is empty");
    for (std::size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1])
            throw InvalidConfig("concentration_sweep: n_list must be strictly ascending");

    const Matrix eye = Matrix::Identity(model.d, model.d);
    const Matrix view = model.view_corr();
    std::vector<ConcentrationRow> rows;
    rows.reserve(n_list.size() * seeds.size());
    for (const Eigen::Index n : n_list) {
        for (const std::uint64_t seed : seeds) {
            const CorrSet c = empirical_corr(sample_triples(model, n, seed));
            rows.push_back({n, seed, op_norm(SymMatrix::symmetrized(c.C11 - view)),
                            op_norm(Matrix(c.C12 - eye)), op_norm(SymMatrix::symmetrized(c.C00 - eye))});
        }
    }
    return rows;
}

void write_samples_csv(std::ostream& out, const AugmentationModel& model, const SampleSet& samples) {
    csv::write_row(out, {"d", "r", "n", "sigma2", "seed"});
    csv::write_row(out, {std::to_string(model.d), std::to_string(model.r), std::to_string(samples.n),
                         csv::format_double(model.sigma2), std::to_string(samples.seed)});
    std::vector<std::string> header{"view", "row"};
    for (Eigen::Index k = 0; k < model.d; ++k) header.push_back(fmt::format("c{}", k));
    csv::write_row(out, header);

    const auto dump = [&](const char* name, const Matrix& m) {
        std::vector<std::string> cells;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            cells.assign({name, std::to_string(i)});
            for (Eigen::Index k = 0; k < m.cols(); ++k) cells.push_back(csv::format_double(m(i, k)));
            csv::write_row(out, cells);
        }
    };
    dump("x", samples.x);
    dump("x1", samples.x1);
    dump("x2", samples.x2);
}

SampleDump read_samples_csv(std::istream& in) {
    std::string line;
    const auto next = [&]() {
        if (!std::getline(in, line)) throw InvalidConfig("read_samples_csv: truncated file");
        return csv::split(line);
    };
    if (next() != std::vector<std::string>{"d", "r", "n", "sigma2", "seed"})
        throw InvalidConfig("read_samples_csv: bad metadata header");
    const auto meta = next();
    if (meta.size() != 5) throw InvalidConfig("read_samples_csv: bad metadata line");

    SampleDump dump;
    dump.d = std::stol(meta[0]);
    dump.r = std::stol(meta[1]);
    dump.samples.n = std::stol(meta[2]);
    dump.sigma2 = csv::parse_double(meta[3]);
    dump.samples.seed = std::stoull(meta[4]);
    const Eigen::Index d = dump.d, n = dump.samples.n;
    if (d < 1 || n < 1) throw InvalidConfig("read_samples_csv: bad dimensions");
    next();  // column header

    Matrix* views[] = {&dump.samples.x, &dump.samples.x1, &dump.samples.x2};
    for (Matrix* m : views) {
        m->resize(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto cells = next();
            if (static_cast<Eigen::Index>(cells.size()) != d + 2)
                throw InvalidConfig("read_samples_csv: row has the wrong width");
            for (Eigen::Index k = 0; k < d; ++k) (*m)(i, k) = csv::parse_double(cells[k + 2]);
        }
    }
    return dump;
}

}  // namespace ncssl
