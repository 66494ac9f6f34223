#include "lal/quad_rates.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "lal/parallel.hpp"

namespace lal {

void ScalarModeSystem::validate() const {
    if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
    if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("beta must lie in [0, 1)");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
}

Eigen::MatrixXd build_transition(const ScalarModeSystem& sys) {
    sys.validate();
    const double first_step = 1.0 - sys.eta * sys.lambda;
    if (sys.k == 1) {
        Eigen::Matrix3d T;
        T << first_step, sys.beta, -sys.beta,
             1, 0, 0,
             0, 1, 0;
        Eigen::Matrix3d L;
        L << sys.alpha, 1.0 - sys.alpha, 0,
             1, 0, 0,
             0, 1, 0;
        return L * T;
    }

    const int n = sys.k + 1;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) L(i, i - 1) = B(i, i - 1) = T(i, i - 1) = 1.0;
    L(0, 0) = sys.alpha;
    L(0, n - 1) = 1.0 - sys.alpha;
    B(0, 0) = (1.0 + sys.beta) - sys.eta * sys.lambda;
    B(0, 1) = -sys.beta;
    T(0, 0) = first_step;
    T(0, 1) = sys.beta;
    T(0, 2) = -sys.beta;

    Eigen::MatrixXd M = L;
    for (int i = 0; i < sys.k - 1; ++i) M = M * B;
    return M * T;
}

namespace {

std::string dump_matrix(const Eigen::MatrixXd& m) {
    std::ostringstream os;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ' ';
            os << m(r, c);
        }
        os << '\n';
    }
    return os.str();
}

// Parlett-Reinsch balancing (diagonal similarity scaling toward equal row and
// column norms). The stacked transition is a highly nonnormal companion-like
// product; without balancing the eigensolver loses several digits on the
// strongly contracting modes.
void balance_in_place(Eigen::MatrixXd& a) {
    const double radix = 2.0, radix2 = radix * radix;
    const Eigen::Index n = a.rows();
    bool done = false;
    while (!done) {
        done = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0;
            const double s = c + r;
            double g = r / radix;
            while (c < g) {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= radix2;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                a.row(i) /= f;
                a.col(i) *= f;
            }
        }
    }
}

}  // namespace

double convergence_rate(const ScalarModeSystem& sys) {
    Eigen::MatrixXd M = build_transition(sys);
    const Eigen::MatrixXd original = M;
    balance_in_place(M);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(M, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw NumericError("eigensolver failed on transition matrix:\n" + dump_matrix(original));
    const double radius = solver.eigenvalues().cwiseAbs().maxCoeff();
    return std::pow(radius, 1.0 / static_cast<double>(sys.k));
}

double cm_rate_reference(double lambda, double eta, double beta) {
    const double tr = 1.0 + beta - eta * lambda;
    const double disc = tr * tr - 4.0 * beta;
    if (disc < 0.0) return std::sqrt(beta);  // complex pair: |z|^2 = det = beta
    const double s = std::sqrt(disc);
    return std::max(std::abs(0.5 * (tr + s)), std::abs(0.5 * (tr - s)));
}

std::vector<RateRow> rate_sweep(const RateSweepSpec& spec) {
    if (spec.kappas.empty()) throw ConfigError("kappa grid must be non-empty");
    for (double kp : spec.kappas)
        if (!(kp >= 1.0)) throw ConfigError("condition numbers must be >= 1");
    if (spec.eta_points < 2) throw ConfigError("eta grid needs at least 2 points");
    if (!(spec.eta_min_frac > 0.0 && spec.eta_min_frac < 1.0))
        throw ConfigError("eta_min_frac must lie in (0, 1)");

    // lambda_max = 1, so CM is stable only below 2(1+beta).
    const double eta_hi = 2.0 * (1.0 + spec.beta) * (1.0 - 1e-9);
    const double eta_lo = eta_hi * spec.eta_min_frac;
    std::vector<double> etas(spec.eta_points);
    for (int i = 0; i < spec.eta_points; ++i)
        etas[i] = std::exp(std::log(eta_lo) +
                           (std::log(eta_hi) - std::log(eta_lo)) * i / (spec.eta_points - 1));

    std::vector<RateRow> rows(2 * spec.kappas.size());
    parallel_for(spec.kappas.size(), [&](std::size_t idx) {
        const double kappa = spec.kappas[idx];
        const double lams[2] = {1.0, 1.0 / kappa};
        RateRow cm{kappa, "cm", std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::infinity()};
        RateRow la{kappa, "lookahead", std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::infinity()};
        for (double eta : etas) {
            double rc = 0.0, rl = 0.0;
            for (double lam : lams) {
                rc = std::max(rc, cm_rate_reference(lam, eta, spec.beta));
                rl = std::max(rl, convergence_rate(
                                      {lam, eta, spec.beta, spec.k, spec.alpha}));
            }
            if (rc < 1.0 && rc < cm.rate) cm = {kappa, "cm", eta, rc};
            if (rl < 1.0 && rl < la.rate) la = {kappa, "lookahead", eta, rl};
        }
        rows[2 * idx] = cm;
        rows[2 * idx + 1] = la;
    });
    return rows;
}

}  // namespace lal
