#pragma once

// Discrete-time training of the single-layer online network W with a directly
// set predictor W_p and target W_a = W.
//
// Gradient step (Euler discretization of the flow, C11 = E[x1 x1^T],
// C21 = E[x2 x1^T]):
//     W' = W + gamma * ( W_p^T (-W_p W C11 + W C21) - eta W )

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "ncssl/data.hpp"
#include "ncssl/linalg.hpp"

namespace ncssl {

enum class PredictorMode {
    theory_wwT,       // (W W^T)^alpha
    theory_x1corr,    // (W E[x1 x1^T] W^T)^alpha
    empirical_xcorr,  // (W C00 W^T)^alpha
    practice_ema,     // F_ema^alpha / ||F_ema^alpha|| + eps I
};

enum class Normalization { spectral, frobenius, none };

std::string_view to_string(PredictorMode mode);
std::string_view to_string(Normalization norm);
PredictorMode parse_predictor_mode(std::string_view name);
Normalization parse_normalization(std::string_view name);

struct TrainerConfig {
    double alpha = 1.0;
    double eta = 0.0;
    double gamma = 0.05;
    double eps = 0.0;
    double mu_ema = 0.0;
    Normalization normalization = Normalization::spectral;
    PredictorMode predictor_mode = PredictorMode::theory_wwT;
    std::size_t max_steps = 100000;
    double stop_tol = 1e-10;
    /// practice_ema with samples: rows per EMA batch, cycling through the set
    /// (0 = full batch).
    std::size_t batch_size = 0;
    /// Record the predictor-input spectrum every k steps (0 = never).
    std::size_t spectrum_every = 0;

    void validate() const;
};

/// Non-owning view of whatever correlations a predictor mode needs.
struct PredictorInputs {
    const AugmentationModel* model = nullptr;  // theory_x1corr, population practice_ema
    const CorrSet* corr = nullptr;             // empirical_xcorr
    const Matrix* f_ema = nullptr;             // practice_ema
};

struct TrainerState {
    Matrix W;
    std::optional<Matrix> F_ema;
    std::size_t step = 0;
};

/// F, the correlation of the predictor inputs under the current mode:
/// W W^T, W E[x1 x1^T] W^T, W C00 W^T, or F_ema.
SymMatrix predictor_input_corr(const Matrix& W, const PredictorInputs& in, const TrainerConfig& cfg);

SymMatrix set_predictor(const Matrix& W, const PredictorInputs& in, const TrainerConfig& cfg);

/// One Euler step on the population loss; theory modes only.
Matrix population_grad_step(const Matrix& W, const AugmentationModel& model, const TrainerConfig& cfg);

/// One full-batch step on the empirical loss with fixed sample correlations.
/// predictor_mode must be empirical_xcorr; alpha != 1 runs outside the regime
/// covered by the finite-sample guarantee.
Matrix empirical_grad_step(const Matrix& W, const CorrSet& corr, const TrainerConfig& cfg);

/// best_c = <W, P_S>_F / r and err = ||W - best_c P_S||_op.
struct SubspaceError {
    double err = 0.0;
    double best_c = 0.0;
};

SubspaceError subspace_error(const Matrix& W, const AugmentationModel& model);

struct TraceEntry {
    std::size_t step = 0;
    double err = 0.0;
    double best_c = 0.0;
    double lambda_S_est = 0.0;  // trace(P_S W P_S) / r
    double lambda_B_est = 0.0;  // trace(P_B W P_B) / (d - r), 0 when B is empty
    double fro_norm = 0.0;
};

TraceEntry trace_entry(std::size_t step, const Matrix& W, const AugmentationModel& model);

struct SpectrumRow {
    std::size_t epoch = 0;
    Vector eigenvalues;  // descending
};

struct TrainReport {
    std::size_t steps_run = 0;
    Matrix final_W;
    std::vector<TraceEntry> trace;  // steps_run + 1 entries
    std::vector<SpectrumRow> spectra;
    bool converged = false;
};

/// Runs from W = delta * I until ||W_{t+1} - W_t||_F <= stop_tol or max_steps.
/// Population updates when `samples` is absent; empirical (full batch) otherwise.
/// empirical_xcorr requires samples.
TrainReport train(double delta, const AugmentationModel& model, const TrainerConfig& cfg,
                  const SampleSet* samples = nullptr);

/// Descending eigenvalues of F = W C W^T for every k-th snapshot in `history`.
std::vector<SpectrumRow> spectrum_trace(const std::vector<Matrix>& history, const Matrix& C, std::size_t every);

/// Weight-decay window of the finite-sample DirectCopy guarantee:
/// ((1 + sigma2/4) / (4(1 + sigma2)), (1 + 3 sigma2/4) / (4(1 + sigma2))).
struct EtaWindow {
    double low = 0.0;
    double high = 0.0;
    double midpoint() const { return 0.5 * (low + high); }
};

EtaWindow empirical_eta_window(double sigma2);

/// Limit scale of W on S for single-layer DirectCopy: sqrt((1 + sqrt(1 - 4 eta)) / 2).
double directcopy_limit(double eta);

// ---- l2-normalized loss ------------------------------------------------------
//
// L = 1/2 || f1/|f1| - f2/|f2| ||^2 + rho/2 ||W||_F^2 with f1 = W_p W x1,
// f2 = W_a x2. The data part of the gradient is orthogonal to W, so under the
// flow with W_p, W_a frozen, d/dt 1/2 ||W||_F^2 = -rho ||W||_F^2.

/// Data term of the gradient: (1/|f1|) W_p^T (I - f1h f1h^T)(f1h - f2h) x1^T.
Matrix normalized_loss_data_grad(const Matrix& W, const Matrix& Wp, const Matrix& Wa, const Vector& x1,
                                 const Vector& x2);

struct NormDecayReport {
    double inner_product = 0.0;   // <data grad, W> / (||W||_F ||data grad||_F)
    double predicted_rate = 0.0;  // d/dt ||W||_F^2 = -2 rho ||W||_F^2
    double fd_rate = 0.0;         // central difference over Euler steps of size h
};

NormDecayReport norm_decay_check(const Matrix& W, const Matrix& Wp, const Matrix& Wa, const Vector& x1,
                                 const Vector& x2, double rho, double h = 1e-6);

/// Euler integration of the frozen-predictor flow; returns ||W(T)||_F^2.
double integrate_norm_flow(const Matrix& W0, const Matrix& Wp, const Matrix& Wa, const Vector& x1,
                           const Vector& x2, double rho, double T, double dt);

}  // namespace ncssl
