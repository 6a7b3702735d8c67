#include "ncssl/trainer.hpp"

#include <cmath>

#include <fmt/format.h>

namespace ncssl {

namespace {

Matrix euler_step(const Matrix& W, const Matrix& Wp, const Matrix& C11, const Matrix& C21, double gamma,
                  double eta, double at) {
    Matrix next = W + gamma * (Wp.transpose() * (-Wp * W * C11 + W * C21) - eta * W);
    if (!next.allFinite()) throw BlowUpError(fmt::format("gradient step produced non-finite weights at step {}", at), at);
    return next;
}

bool is_theory(PredictorMode m) { return m == PredictorMode::theory_wwT || m == PredictorMode::theory_x1corr; }

Matrix batch_corr(const Matrix& W, const AugmentationModel& model, const SampleSet* samples,
                  const std::optional<CorrSet>& corr, const TrainerConfig& cfg, std::size_t step) {
    if (samples == nullptr) return W * model.view_corr() * W.transpose();
    if (cfg.batch_size == 0 || static_cast<Eigen::Index>(cfg.batch_size) >= samples->n)
        return W * corr->C11 * W.transpose();
    const Eigen::Index b = static_cast<Eigen::Index>(cfg.batch_size);
    Matrix rows(b, samples->x1.cols());
    const Eigen::Index start = static_cast<Eigen::Index>((step * cfg.batch_size) % samples->n);
    for (Eigen::Index i = 0; i < b; ++i) rows.row(i) = samples->x1.row((start + i) % samples->n);
    const Matrix c = rows.transpose() * rows / static_cast<double>(b);
    return W * c * W.transpose();
}

}  // namespace

std::string_view to_string(PredictorMode mode) {
    switch (mode) {
        case PredictorMode::theory_wwT: return "theory_wwT";
        case PredictorMode::theory_x1corr: return "theory_x1corr";
        case PredictorMode::empirical_xcorr: return "empirical_xcorr";
        case PredictorMode::practice_ema: return "practice_ema";
    }
    return "unknown";
}

std::string_view to_string(Normalization norm) {
    switch (norm) {
        case Normalization::spectral: return "spectral";
        case Normalization::frobenius: return "frobenius";
        case Normalization::none: return "none";
    }
    return "unknown";
}

PredictorMode parse_predictor_mode(std::string_view name) {
    for (PredictorMode m : {PredictorMode::theory_wwT, PredictorMode::theory_x1corr, PredictorMode::empirical_xcorr,
                            PredictorMode::practice_ema})
        if (to_string(m) == name) return m;
    throw InvalidConfig(fmt::format("unknown predictor mode '{}'", name));
}

Normalization parse_normalization(std::string_view name) {
    for (Normalization n : {Normalization::spectral, Normalization::frobenius, Normalization::none})
        if (to_string(n) == name) return n;
    throw InvalidConfig(fmt::format("unknown normalization '{}'", name));
}

void TrainerConfig::validate() const {
    if (!(alpha > 0.0)) throw InvalidConfig("alpha must be positive");
    if (!(eta >= 0.0)) throw InvalidConfig("eta must be non-negative");
    if (!(gamma > 0.0)) throw InvalidConfig("gamma must be positive");
    if (!(eps >= 0.0)) throw InvalidConfig("eps must be non-negative");
    if (!(mu_ema >= 0.0 && mu_ema < 1.0)) throw InvalidConfig("mu_ema must lie in [0, 1)");
    if (!(stop_tol >= 0.0)) throw InvalidConfig("stop_tol must be non-negative");
}

SymMatrix predictor_input_corr(const Matrix& W, const PredictorInputs& in, const TrainerConfig& cfg) {
    switch (cfg.predictor_mode) {
        case PredictorMode::theory_wwT: return SymMatrix::symmetrized(W * W.transpose());
        case PredictorMode::theory_x1corr:
            if (in.model == nullptr) throw InvalidConfig("theory_x1corr predictor needs the augmentation model");
            return SymMatrix::symmetrized(W * in.model->view_corr() * W.transpose());
        case PredictorMode::empirical_xcorr:
            if (in.corr == nullptr) throw InvalidConfig("empirical_xcorr predictor needs sample correlations");
            return SymMatrix::symmetrized(W * in.corr->C00 * W.transpose());
        case PredictorMode::practice_ema:
            if (in.f_ema == nullptr) throw InvalidConfig("practice_ema predictor needs the EMA correlation");
            return SymMatrix::symmetrized(*in.f_ema);
    }
    throw InvalidConfig("unknown predictor mode");
}

SymMatrix set_predictor(const Matrix& W, const PredictorInputs& in, const TrainerConfig& cfg) {
    const SymMatrix f = predictor_input_corr(W, in, cfg);
    Matrix wp = psd_power(f, cfg.alpha).matrix();
    if (cfg.predictor_mode == PredictorMode::practice_ema) {
        double norm = 1.0;
        if (cfg.normalization == Normalization::spectral) norm = op_norm(SymMatrix::symmetrized(wp));
        if (cfg.normalization == Normalization::frobenius) norm = fro_norm(wp);
        if (!(norm > 0.0)) throw DegenerateInput("practice_ema predictor: F^alpha is zero, cannot normalize");
        wp /= norm;
    }
    wp.diagonal().array() += cfg.eps;
    return SymMatrix::symmetrized(wp);
}

Matrix population_grad_step(const Matrix& W, const AugmentationModel& model, const TrainerConfig& cfg) {
    if (!is_theory(cfg.predictor_mode))
        throw InvalidConfig("population_grad_step: predictor mode must be theory_wwT or theory_x1corr");
    PredictorInputs in;
    in.model = &model;
    const SymMatrix wp = set_predictor(W, in, cfg);
    const Eigen::Index d = W.rows();
    return euler_step(W, wp.matrix(), model.view_corr(), Matrix::Identity(d, d), cfg.gamma, cfg.eta, 0);
}

Matrix empirical_grad_step(const Matrix& W, const CorrSet& corr, const TrainerConfig& cfg) {
    if (cfg.predictor_mode != PredictorMode::empirical_xcorr)
        throw InvalidConfig("empirical_grad_step: predictor mode must be empirical_xcorr");
    PredictorInputs in;
    in.corr = &corr;
    const SymMatrix wp = set_predictor(W, in, cfg);
    return euler_step(W, wp.matrix(), corr.C11, corr.C12.transpose(), cfg.gamma, cfg.eta, 0);
}

SubspaceError subspace_error(const Matrix& W, const AugmentationModel& model) {
    SubspaceError out;
    out.best_c = W.cwiseProduct(model.P_S.matrix()).sum() / static_cast<double>(model.r);
    out.err = op_norm(Matrix(W - out.best_c * model.P_S.matrix()));
    return out;
}

TraceEntry trace_entry(std::size_t step, const Matrix& W, const AugmentationModel& model) {
    const SubspaceError se = subspace_error(W, model);
    TraceEntry e;
    e.step = step;
    e.err = se.err;
    e.best_c = se.best_c;
    const Matrix& ps = model.P_S.matrix();
    const Matrix& pb = model.P_B.matrix();
    e.lambda_S_est = (ps * W * ps).trace() / static_cast<double>(model.r);
    const Eigen::Index nb = model.d - model.r;
    e.lambda_B_est = nb == 0 ? 0.0 : (pb * W * pb).trace() / static_cast<double>(nb);
    e.fro_norm = W.norm();
    return e;
}

TrainReport train(double delta, const AugmentationModel& model, const TrainerConfig& cfg, const SampleSet* samples) {
    cfg.validate();
    if (cfg.predictor_mode == PredictorMode::empirical_xcorr && samples == nullptr)
        throw InvalidConfig("train: empirical_xcorr requires a sample set");

    const Eigen::Index d = model.d;
    std::optional<CorrSet> corr;
    if (samples != nullptr) corr = empirical_corr(*samples);
    const Matrix c11 = corr ? corr->C11 : model.view_corr();
    const Matrix c21 = corr ? Matrix(corr->C12.transpose()) : Matrix::Identity(d, d);

    TrainerState state;
    state.W = delta * Matrix::Identity(d, d);

    PredictorInputs in;
    in.model = &model;
    if (corr) in.corr = &*corr;

    TrainReport report;
    report.trace.push_back(trace_entry(0, state.W, model));
    const auto record_spectrum = [&](std::size_t step) {
        report.spectra.push_back({step, sym_eig(predictor_input_corr(state.W, in, cfg)).values});
    };

    while (state.step < cfg.max_steps) {
        if (cfg.predictor_mode == PredictorMode::practice_ema) {
            const Matrix fb = batch_corr(state.W, model, samples, corr, cfg, state.step);
            state.F_ema = state.F_ema ? Matrix(cfg.mu_ema * *state.F_ema + (1.0 - cfg.mu_ema) * fb) : fb;
            in.f_ema = &*state.F_ema;
        }
        if (cfg.spectrum_every > 0 && state.step % cfg.spectrum_every == 0) record_spectrum(state.step);

        const SymMatrix wp = set_predictor(state.W, in, cfg);
        Matrix next = euler_step(state.W, wp.matrix(), c11, c21, cfg.gamma, cfg.eta,
                                 static_cast<double>(state.step));
        const double change = (next - state.W).norm();
        state.W = std::move(next);
        ++state.step;
        report.trace.push_back(trace_entry(state.step, state.W, model));
        if (change <= cfg.stop_tol) {
            report.converged = true;
            break;
        }
    }
    if (cfg.spectrum_every > 0 && (report.spectra.empty() || report.spectra.back().epoch != state.step)) {
        record_spectrum(state.step);
    }
    report.steps_run = state.step;
    report.final_W = state.W;
    return report;
}

std::vector<SpectrumRow> spectrum_trace(const std::vector<Matrix>& history, const Matrix& C, std::size_t every) {
    if (history.empty()) throw InvalidConfig("spectrum_trace: empty history");
    if (every == 0) every = 1;
    std::vector<SpectrumRow> out;
    for (std::size_t i = 0; i < history.size(); i += every) {
        const Matrix& W = history[i];
        out.push_back({i, sym_eig(SymMatrix::symmetrized(W * C * W.transpose())).values});
    }
    return out;
}

EtaWindow empirical_eta_window(double sigma2) {
    const double denom = 4.0 * (1.0 + sigma2);
    return {(1.0 + sigma2 / 4.0) / denom, (1.0 + 3.0 * sigma2 / 4.0) / denom};
}

double directcopy_limit(double eta) {
    if (!(eta >= 0.0 && eta <= 0.25)) throw UnsupportedError("directcopy_limit: eta must lie in [0, 1/4]");
    return std::sqrt(0.5 * (1.0 + std::sqrt(1.0 - 4.0 * eta)));
}

Matrix normalized_loss_data_grad(const Matrix& W, const Matrix& Wp, const Matrix& Wa, const Vector& x1,
                                 const Vector& x2) {
    const Vector f1 = Wp * W * x1;
    const Vector f2 = Wa * x2;
    const double n1 = f1.norm();
    const double n2 = f2.norm();
    if (!(n1 > 1e-12) || !(n2 > 1e-12))
        throw DegenerateInput("normalized loss: a representation has (near) zero norm");
    const Vector f1h = f1 / n1;
    const Vector f2h = f2 / n2;
    const Vector diff = f1h - f2h;
    const Vector projected = diff - f1h * f1h.dot(diff);
    return (Wp.transpose() * projected) * x1.transpose() / n1;
}

NormDecayReport norm_decay_check(const Matrix& W, const Matrix& Wp, const Matrix& Wa, const Vector& x1,
                                 const Vector& x2, double rho, double h) {
    const Matrix g = normalized_loss_data_grad(W, Wp, Wa, x1, x2);
    const double wn = W.norm();
    const double gn = g.norm();
    NormDecayReport rep;
    rep.inner_product = gn == 0.0 ? 0.0 : g.cwiseProduct(W).sum() / (wn * gn);
    rep.predicted_rate = -2.0 * rho * wn * wn;
    const Matrix velocity = -(g + rho * W);
    const double ahead = (W + h * velocity).squaredNorm();
    const double behind = (W - h * velocity).squaredNorm();
    rep.fd_rate = (ahead - behind) / (2.0 * h);
    return rep;
}

double integrate_norm_flow(const Matrix& W0, const Matrix& Wp, const Matrix& Wa, const Vector& x1,
                           const Vector& x2, double rho, double T, double dt) {
    if (!(dt > 0.0) || !(T >= 0.0)) throw InvalidConfig("integrate_norm_flow: bad horizon or step");
    const auto steps = static_cast<std::size_t>(std::floor(T / dt + 1e-9));
    Matrix W = W0;
    for (std::size_t k = 0; k < steps; ++k) W -= dt * (normalized_loss_data_grad(W, Wp, Wa, x1, x2) + rho * W);
    return W.squaredNorm();
}

}  // namespace ncssl
