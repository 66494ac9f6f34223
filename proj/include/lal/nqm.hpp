#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lal/optim.hpp"
#include "lal/param_ops.hpp"

namespace lal {

// Noisy quadratic model: Lhat(x) = 1/2 (x - c)^T A (x - c) with c ~ N(0, Sigma),
// A = diag(a) and Sigma = diag(sigma2) co-diagonal.
struct NoisyQuadraticModel {
    ParamVector a;       // curvature, a_i > 0
    ParamVector sigma2;  // noise variance, sigma2_i >= 0

    std::size_t dim() const { return a.size(); }
    double max_curvature() const;  // L = max_i a_i
    void validate() const;

    // Named spectra: "uniform" (a_i = 1), "one_over_i", "one_over_i2";
    // sigma2 = 1/a_i (Sigma = A^{-1}).
    static NoisyQuadraticModel spectrum(const std::string& name, std::size_t n);
};

// Eigenvalues from a plain-text file, one per line; sigma2 = 1/a_i.
NoisyQuadraticModel load_spectrum_file(const std::string& path);

// First two moments of the iterate distribution, elementwise.
struct MomentState {
    ParamVector mean;  // E[x_i]
    ParamVector var;   // V[x_i]

    static MomentState zero(std::size_t n) { return {ParamVector(n, 0.0), ParamVector(n, 0.0)}; }
};

// 1/2 sum_i a_i (E[x_i]^2 + V[x_i] + sigma2_i); never below the noise floor.
double expected_loss(const MomentState& m, const NoisyQuadraticModel& model);

// The irreducible 1/2 sum_i a_i sigma2_i.
double noise_floor(const NoisyQuadraticModel& model);

// One SGD step of the exact moment dynamics:
//   E' = (I - gamma A) E,   V' = (I - gamma A)^2 V + gamma^2 A^2 Sigma.
// Requires 0 <= gamma < 2/L (gamma = 0 is the identity).
MomentState sgd_moment_step(const MomentState& m, double gamma, const NoisyQuadraticModel& model);

// One slow-weight (outer) step of Lookahead-over-SGD moment dynamics:
//   E' = [1 - alpha + alpha (I - gamma A)^k] E
//   V' = [...]^2 V + alpha^2 sum_{i=0}^{k-1} (I - gamma A)^{2i} gamma^2 A^2 Sigma.
MomentState lookahead_moment_step(const MomentState& m, double gamma, double alpha, int k,
                                  const NoisyQuadraticModel& model);

// Closed-form variance fixed points (the expectations contract to zero).
ParamVector sgd_variance_fixed_point(double gamma, const NoisyQuadraticModel& model);
ParamVector lookahead_variance_fixed_point(double gamma, double alpha, int k,
                                           const NoisyQuadraticModel& model);

// --- Monte-Carlo validation -------------------------------------------------

struct McSpec {
    InnerConfig inner;                 // the real optimizer stepped on sampled gradients
    bool lookahead = false;
    int k = 1;
    double alpha = 1.0;
    MomentumMode mode = MomentumMode::Maintain;
    std::vector<long> record_at;       // inner steps (plain) or outer steps (lookahead)
    long num_seeds = 10000;
    std::uint64_t seed = 0;
    ParamVector x0;
};

struct McMoments {
    std::uint64_t seed = 0;  // recorded for reproducibility
    std::vector<long> times;
    std::vector<ParamVector> mean, var;        // empirical, per recorded time
    std::vector<ParamVector> se_mean, se_var;  // standard errors
};

// Runs `num_seeds` independent trajectories of the configured optimizer on
// gradients A (x - c), c ~ N(0, Sigma) freshly sampled each inner step, and
// records empirical slow-weight moments at the requested times.
McMoments monte_carlo_nqm(const NoisyQuadraticModel& model, const McSpec& spec);

// --- Analytic sweeps ---------------------------------------------------------

struct SweepGrid {
    std::vector<double> gammas;
    std::vector<double> alphas;
    int k = 5;
    long horizon = 1000;  // inner steps; lookahead runs floor(horizon / k) outer steps

    void validate(const NoisyQuadraticModel& model) const;
};

// Log-spaced grid of `count` points from lo to hi inclusive.
std::vector<double> log_spaced(double lo, double hi, int count);
// Evenly spaced grid i/(count+1)*(hi-lo)+lo over the open interval (lo, hi).
std::vector<double> open_linear(double lo, double hi, int count);

struct ComparisonRow {
    std::string optimizer;  // "sgd" or "lookahead"
    double gamma = 0.0;
    double alpha = 0.0;     // meaningful for lookahead rows only
    int k = 0;
    double steady_state_loss = 0.0;
    double loss_at_horizon = 0.0;
};

// Unrolls the analytic dynamics from E0 = 1, V0 = 0 for every grid
// configuration; rows come back sorted by steady-state loss. Configurations
// outside the stability region are skipped (callers may flag them).
std::vector<ComparisonRow> convergence_comparison_sweep(const NoisyQuadraticModel& model,
                                                        const SweepGrid& grid);

struct HorizonBest {
    long horizon = 0;
    double sgd_loss = 0.0, sgd_gamma = 0.0;
    double la_loss = 0.0, la_gamma = 0.0, la_alpha = 0.0;
};

// Best expected loss over the grid at each horizon (multiples of k up to
// grid.horizon), for SGD and Lookahead separately.
std::vector<HorizonBest> finite_horizon_sweep(const NoisyQuadraticModel& model,
                                              const SweepGrid& grid);

struct HorizonRow {
    std::string optimizer;
    double gamma = 0.0, alpha = 0.0;
    int k = 0;
    long horizon = 0;
    double loss = 0.0;
    double steady_state_loss = 0.0;
};

// Full per-configuration table at the requested horizons (CLI output).
std::vector<HorizonRow> finite_horizon_table(const NoisyQuadraticModel& model,
                                             const SweepGrid& grid,
                                             const std::vector<long>& horizons);

}  // namespace lal
