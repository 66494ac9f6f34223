#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lal/param_ops.hpp"

namespace lal {

// One eigenvalue mode of a diagonal quadratic 1/2 sum_i lambda_i theta_i^2
// optimized by Lookahead wrapping classical momentum. A diagonal Hessian
// decouples the full system into independent scalar modes, so rates are
// computed per eigenvalue and combined by taking the maximum.
struct ScalarModeSystem {
    double lambda = 1.0;  // curvature of this mode
    double eta = 0.1;     // CM learning rate
    double beta = 0.9;    // CM momentum
    int k = 20;           // inner steps per outer step
    double alpha = 0.5;   // slow-weights step size

    void validate() const;
};

// One-outer-step transition matrix of the stacked fast-weight state
// [theta_{t,0}; theta_{t-1,k}; ...; theta_{t-1,1}], the product L B^{k-1} T:
//   T applies the first CM step of a cycle, reaching back across the
//     interpolation boundary for its momentum (top row 1-eta*lambda, beta,
//     -beta),
//   B applies a within-cycle CM step (top row (1+beta)-eta*lambda, -beta),
//   L applies the slow-weight interpolation (top row alpha, 0, ..., 1-alpha),
// each with an identity shift on the subdiagonal. Size (k+1) x (k+1) for
// k >= 2. For k = 1 that stacking is too short to carry the cross-boundary
// momentum, so the exact 3x3 system on [phi_t; theta_{t-1,1}; phi_{t-1}] is
// returned instead (same T; L interpolates the second slot).
Eigen::MatrixXd build_transition(const ScalarModeSystem& sys);

// Per-inner-step contraction factor: (spectral radius of the one-outer-step
// transition)^(1/k). Values below 1 mark convergence.
double convergence_rate(const ScalarModeSystem& sys);

// Spectral radius of the 2x2 classical-momentum companion matrix
// [[1+beta-eta*lambda, -beta], [1, 0]]: |1 - eta*lambda| at beta = 0,
// sqrt(beta) in the complex (underdamped) regime.
double cm_rate_reference(double lambda, double eta, double beta);

struct RateRow {
    double kappa = 1.0;
    std::string optimizer;  // "cm" or "lookahead"
    double eta_best = 0.0;
    double rate = 0.0;      // infinity when every grid point diverges
};

struct RateSweepSpec {
    std::vector<double> kappas;   // condition numbers; eigenvalues {1, 1/kappa}
    double beta = 0.9;
    int k = 20;
    double alpha = 0.5;
    int eta_points = 200;         // log-spaced grid in (0, 2(1+beta))
    double eta_min_frac = 1e-3;   // lower end as a fraction of the upper end
};

// For each condition number, the best rate over the eta grid for classical
// momentum and for Lookahead wrapping it (two rows per kappa).
std::vector<RateRow> rate_sweep(const RateSweepSpec& spec);

}  // namespace lal
