// Acceptance suite: runs every headline check at its stated tolerance and
// prints one pass/fail line per criterion. Exit code is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lal/harness.hpp"
#include "lal/nqm.hpp"
#include "lal/optim.hpp"
#include "lal/quad_rates.hpp"
#include "lal/rng.hpp"
#include "lal/taylor.hpp"

using namespace lal;

namespace {

// ---------------------------------------------------------------- helpers ---

ParamVector iterate_variance_to_convergence(const NoisyQuadraticModel& model, double gamma,
                                            double alpha, int k, bool lookahead) {
    MomentState m = MomentState::zero(model.dim());
    for (long it = 0; it < 1000000; ++it) {
        const MomentState next = lookahead ? lookahead_moment_step(m, gamma, alpha, k, model)
                                           : sgd_moment_step(m, gamma, model);
        double worst = 0.0;
        for (std::size_t i = 0; i < model.dim(); ++i) {
            const double r = 1.0 - gamma * model.a[i];
            const double u = lookahead ? (1.0 - alpha) + alpha * ipow(r, k) : r;
            const double c = u * u;
            const double change = std::abs(next.var[i] - m.var[i]);
            const double scale = std::max(next.var[i], 1e-300);
            worst = std::max(worst, c / (1.0 - c) * change / scale);
        }
        m = next;
        if (worst < 1e-11) break;
    }
    return m.var;
}

double simulated_log_rate(double lambda, double eta, double beta, int k, double alpha,
                          int outer_steps, std::uint64_t seed) {
    Rng rng(seed);
    double phi = rng.normal(), theta = phi, vel = rng.normal();
    std::vector<double> fast(k), lognorms;
    double acc = 0.0;
    for (int t = 0; t < outer_steps; ++t) {
        for (int i = 0; i < k; ++i) {
            const double v = beta * vel - eta * lambda * theta;
            vel = v;
            theta += v;
            fast[i] = theta;
        }
        phi = phi + alpha * (theta - phi);
        theta = phi;
        double norm = phi * phi;
        for (int i = 0; i < k; ++i) norm += fast[i] * fast[i];
        norm = std::sqrt(norm);
        acc += std::log(norm);
        lognorms.push_back(acc);
        phi /= norm;
        theta /= norm;
        vel /= norm;
    }
    const std::size_t lo = lognorms.size() / 2, m = lognorms.size() - lo;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        sx += i;
        sy += lognorms[lo + i];
        sxx += static_cast<double>(i) * i;
        sxy += i * lognorms[lo + i];
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx) / k;
}

std::vector<ParamVector> gradient_stream(std::size_t n, int steps, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<ParamVector> grads(steps, ParamVector(n));
    for (auto& g : grads)
        for (double& x : g) x = rng.normal();
    return grads;
}

double data_max_curvature(const SyntheticDataset& ds) {
    const std::size_t d = ds.cols(), n = ds.rows();
    ParamVector v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lam = 0.0;
    for (int it = 0; it < 200; ++it) {
        ParamVector w(d, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double* x = ds.row(r);
            double xv = 0.0;
            for (std::size_t c = 0; c < d; ++c) xv += x[c] * v[c];
            for (std::size_t c = 0; c < d; ++c) w[c] += x[c] * xv;
        }
        for (double& x : w) x /= static_cast<double>(n);
        lam = norm2(w);
        for (double& x : w) x /= lam;
        v = w;
    }
    return lam;
}

// ------------------------------------------------------------- criteria ---

bool criterion_fixed_point_equality(std::string& detail) {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        NoisyQuadraticModel m;
        m.a.resize(n);
        m.sigma2.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            m.a[i] = 0.1 + 2.0 * rng.uniform01();
            m.sigma2[i] = 0.05 + rng.uniform01();
        }
        const double gamma = rng.uniform(0.05, 1.95) / m.max_curvature();
        const double alpha = rng.uniform(0.05, 1.0);
        const int k = 1 + static_cast<int>(rng.below(20));

        const ParamVector sgd_closed = sgd_variance_fixed_point(gamma, m);
        const ParamVector sgd_iter = iterate_variance_to_convergence(m, gamma, 0, 1, false);
        const ParamVector la_closed = lookahead_variance_fixed_point(gamma, alpha, k, m);
        const ParamVector la_iter = iterate_variance_to_convergence(m, gamma, alpha, k, true);
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(sgd_iter[i] - sgd_closed[i]) / sgd_closed[i]);
            worst = std::max(worst, std::abs(la_iter[i] - la_closed[i]) / la_closed[i]);
        }
    }
    detail = "max rel err " + std::to_string(worst);
    return worst < 1e-10;
}

bool criterion_variance_reduction(std::string& detail) {
    Rng rng(202);
    long violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const double a = 0.1 + 3.0 * rng.uniform01();
        NoisyQuadraticModel m{{a}, {0.01 + rng.uniform01()}};
        double gamma, alpha;
        switch (trial % 10) {
            case 0: gamma = 1.999 / a; alpha = rng.uniform(0.001, 0.999); break;
            case 1: gamma = rng.uniform(0.005, 1.995) / a; alpha = 0.999; break;
            default: gamma = rng.uniform(0.005, 1.995) / a; alpha = rng.uniform(0.001, 0.999);
        }
        const int k = 1 + static_cast<int>(rng.below(20));
        if (!(lookahead_variance_fixed_point(gamma, alpha, k, m)[0] <
              sgd_variance_fixed_point(gamma, m)[0]))
            ++violations;
    }
    detail = std::to_string(violations) + " violations / 10000 draws";
    return violations == 0;
}

bool criterion_monte_carlo(std::string& detail) {
    double worst_z = 0.0;
    const std::vector<long> times{1, 10, 100};
    struct Setup {
        NoisyQuadraticModel model;
        bool lookahead;
        std::uint64_t seed;
    };
    std::vector<Setup> setups;
    setups.push_back({{{1.0}, {1.0}}, false, 301});
    setups.push_back({{{1.0}, {1.0}}, true, 302});
    setups.push_back({NoisyQuadraticModel::spectrum("one_over_i", 10), false, 303});
    setups.push_back({NoisyQuadraticModel::spectrum("one_over_i", 10), true, 304});

    for (const auto& s : setups) {
        McSpec spec;
        spec.inner.kind = OptimizerKind::Sgd;
        spec.inner.learning_rate = 0.5;
        spec.lookahead = s.lookahead;
        spec.k = 5;
        spec.alpha = 0.5;
        spec.record_at = times;
        spec.num_seeds = 10000;
        spec.seed = s.seed;
        spec.x0.assign(s.model.dim(), 1.0);
        const McMoments mc = monte_carlo_nqm(s.model, spec);

        MomentState analytic{ParamVector(s.model.dim(), 1.0), ParamVector(s.model.dim(), 0.0)};
        long t = 0;
        for (std::size_t ti = 0; ti < times.size(); ++ti) {
            for (; t < times[ti]; ++t)
                analytic = s.lookahead
                               ? lookahead_moment_step(analytic, 0.5, 0.5, 5, s.model)
                               : sgd_moment_step(analytic, 0.5, s.model);
            for (std::size_t i = 0; i < s.model.dim(); ++i) {
                worst_z = std::max(worst_z, std::abs(mc.mean[ti][i] - analytic.mean[i]) /
                                                std::max(mc.se_mean[ti][i], 1e-300));
                worst_z = std::max(worst_z, std::abs(mc.var[ti][i] - analytic.var[i]) /
                                                std::max(mc.se_var[ti][i], 1e-300));
            }
        }
    }
    detail = "max |z| " + std::to_string(worst_z) + " (threshold 4)";
    return worst_z < 4.0;
}

bool criterion_rate_validity(std::string& detail) {
    Rng rng(404);
    double worst_fit = 0.0;
    int accepted = 0;
    while (accepted < 50) {
        const double lambda = std::pow(10.0, rng.uniform(-1.0, 1.0));
        const double beta = rng.uniform(0.0, 0.95);
        const int k = 1 + static_cast<int>(rng.below(20));
        const double alpha = rng.uniform(0.1, 1.0);
        const double eta = rng.uniform(0.05, 1.9 * (1.0 + beta)) / lambda;
        const double rho = convergence_rate({lambda, eta, beta, k, alpha});
        if (!(rho > 0.05 && rho < 0.995)) continue;
        ++accepted;
        const int outer = std::max(500, 10000 / k);
        const double fit =
            simulated_log_rate(lambda, eta, beta, k, alpha, outer, 1000 + accepted);
        worst_fit = std::max(worst_fit, std::abs(fit - std::log(rho)));
    }
    double worst_cm = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
        const double lambda = std::pow(10.0, rng.uniform(-1.0, 1.0));
        const double beta = rng.uniform(0.0, 0.95);
        const int k = 1 + static_cast<int>(rng.below(20));
        const double eta = rng.uniform(0.05, 1.9 * (1.0 + beta)) / lambda;
        worst_cm = std::max(worst_cm, std::abs(convergence_rate({lambda, eta, beta, k, 1.0}) -
                                               cm_rate_reference(lambda, eta, beta)));
    }
    detail = "max log-slope err " + std::to_string(worst_fit) + ", max alpha=1 cm diff " +
             std::to_string(worst_cm);
    return worst_fit < 1e-3 && worst_cm < 1e-10;
}

bool criterion_quad_figure(std::string& detail) {
    RateSweepSpec spec;
    spec.kappas = log_spaced(1.0, 1e4, 13);
    spec.beta = 0.9;
    spec.k = 20;
    spec.alpha = 0.5;
    spec.eta_points = 200;
    const auto rows = rate_sweep(spec);
    bool la_better = false, la_worse = false;
    for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
        const double cm = rows[i].rate, la = rows[i + 1].rate;
        if (la < cm) la_better = true;
        if (la >= cm) la_worse = true;
    }
    detail = std::string("underdamped improvement ") + (la_better ? "present" : "absent") +
             ", overdamped penalty " + (la_worse ? "present" : "absent");
    return la_better && la_worse;
}

bool criterion_nqm_dominance(std::string& detail) {
    const auto model = NoisyQuadraticModel::spectrum("one_over_i", 100);
    SweepGrid grid;
    grid.gammas = log_spaced(1e-4, 1e-1, 100);
    grid.alphas = log_spaced(1e-4, 1.0, 50);
    grid.k = 5;
    grid.horizon = 1000;
    const auto best = finite_horizon_sweep(model, grid);
    long failures = 0;
    for (const auto& b : best)
        if (!(b.la_loss <= b.sgd_loss + 1e-12)) ++failures;
    detail = std::to_string(failures) + " of " + std::to_string(best.size()) +
             " horizons violate dominance";
    return failures == 0;
}

bool criterion_taylor(std::string& detail) {
    const auto report = taylor_check_report(505, 20000);
    const double qerr = report.at("quadratic_max_error").get<double>();
    const bool ratios = report.at("ratios_in_range").get<bool>();
    const double z = report.at("identity_max_z").get<double>();
    detail = "quadratic err " + std::to_string(qerr) + ", ratios in [6,10] " +
             (ratios ? "yes" : "no") + ", identity max z " + std::to_string(z);
    return qerr < 1e-10 && ratios && z < 4.0;
}

bool criterion_alpha_star(std::string& detail) {
    Rng rng(606);
    double worst_gap = 0.0, worst_adaptive = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        QuadraticProblem prob;
        prob.a.resize(n);
        prob.b.resize(n);
        ParamVector t0(n), tk(n);
        for (std::size_t i = 0; i < n; ++i) {
            prob.a[i] = 0.1 + 3.0 * rng.uniform01();
            prob.b[i] = rng.normal();
            t0[i] = rng.normal();
            tk[i] = rng.normal();
        }
        const double astar = exact_alpha_star(prob, t0, tk);
        auto loss_at = [&](double alpha) {
            ParamVector x(n);
            for (std::size_t i = 0; i < n; ++i) x[i] = t0[i] + alpha * (tk[i] - t0[i]);
            return prob.loss(x);
        };
        const double at_star = loss_at(astar);
        for (int j = 0; j <= 1000; ++j)
            worst_gap = std::max(worst_gap, at_star - loss_at(astar - 2.0 + 4.0 * j / 1000.0));

        const double ahat =
            adaptive_alpha(t0, tk, prob.a, prob.grad(tk), 0.2, /*fallback=*/0.5);
        const double clipped = std::clamp(astar, 0.2, 1.0);
        worst_adaptive = std::max(worst_adaptive, std::abs(ahat - clipped));
    }
    detail = "max optimality gap " + std::to_string(worst_gap) + ", max adaptive diff " +
             std::to_string(worst_adaptive);
    return worst_gap <= 1e-12 && worst_adaptive <= 1e-8;
}

bool criterion_identity_suite(std::string& detail) {
    // alpha=1 bitwise equivalence for every inner optimizer and k
    const auto grads = gradient_stream(4, 60, 707);
    InnerConfig sgd;
    sgd.kind = OptimizerKind::Sgd;
    sgd.learning_rate = 0.05;
    InnerConfig cm;
    cm.kind = OptimizerKind::Momentum;
    cm.learning_rate = 0.05;
    cm.momentum = 0.9;
    InnerConfig adam;
    adam.kind = OptimizerKind::Adam;
    adam.learning_rate = 0.01;

    for (const InnerConfig& cfg : {sgd, cm, adam}) {
        for (int k : {1, 2, 5}) {
            ParamVector plain{0.3, -0.7, 1.1, 0.0};
            InnerOptimizer inner(cfg);
            LookaheadOptimizer wrapped(plain, k, 1.0, MomentumMode::Maintain,
                                       InnerOptimizer(cfg));
            for (const auto& g : grads) {
                inner.step(plain, g);
                wrapped.step(g);
                if (wrapped.fast_weights() != plain) {
                    detail = "alpha=1 equivalence broke (kind " + to_string(cfg.kind) + ")";
                    return false;
                }
                if (wrapped.fast_step_counter() == 0 &&
                    wrapped.fast_weights() != wrapped.slow_weights()) {
                    detail = "fast != slow after outer step";
                    return false;
                }
            }
        }
    }

    // incremental vs reference loop, bitwise
    for (const InnerConfig& cfg : {sgd, cm, adam}) {
        const int k = 3;
        const double alpha = 0.6;
        ParamVector ref_slow{0.5, -0.25, 2.0, 1.0}, ref_fast = ref_slow;
        ParamVector vel(4, 0.0), m(4, 0.0), v(4, 0.0);
        long adam_t = 0;
        LookaheadOptimizer opt(ref_slow, k, alpha, MomentumMode::Maintain,
                               InnerOptimizer(cfg));
        int count = 0;
        for (const auto& g : grads) {
            switch (cfg.kind) {
                case OptimizerKind::Sgd:
                    for (int i = 0; i < 4; ++i) ref_fast[i] -= cfg.learning_rate * g[i];
                    break;
                case OptimizerKind::Momentum:
                    for (int i = 0; i < 4; ++i) {
                        const double nv = cfg.momentum * vel[i] - cfg.learning_rate * g[i];
                        vel[i] = nv;
                        ref_fast[i] += nv;
                    }
                    break;
                case OptimizerKind::Adam: {
                    ++adam_t;
                    const double c1 = 1.0 - ipow(cfg.beta1, adam_t);
                    const double c2 = 1.0 - ipow(cfg.beta2, adam_t);
                    for (int i = 0; i < 4; ++i) {
                        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                        ref_fast[i] -=
                            cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
                    }
                    break;
                }
            }
            if (++count == k) {
                for (int i = 0; i < 4; ++i)
                    ref_slow[i] = ref_slow[i] + alpha * (ref_fast[i] - ref_slow[i]);
                ref_fast = ref_slow;
                count = 0;
            }
            opt.step(g);
            if (opt.fast_weights() != ref_fast || opt.slow_weights() != ref_slow) {
                detail = "incremental vs reference loop diverged (kind " + to_string(cfg.kind) +
                         ")";
                return false;
            }
        }
    }

    // checkpoint round trip, bitwise
    for (const InnerConfig& cfg : {cm, adam}) {
        LookaheadOptimizer full({1.0, 0.0, -1.0, 0.5}, 4, 0.5, MomentumMode::Interpolate,
                                InnerOptimizer(cfg));
        LookaheadOptimizer part = full;
        for (int t = 0; t < 10; ++t) {
            full.step(grads[t]);
            part.step(grads[t]);
        }
        LookaheadOptimizer resumed =
            LookaheadOptimizer::from_json(nlohmann::json::parse(part.to_json().dump()));
        for (std::size_t t = 10; t < grads.size(); ++t) {
            full.step(grads[t]);
            resumed.step(grads[t]);
        }
        if (resumed.fast_weights() != full.fast_weights() ||
            resumed.slow_weights() != full.slow_weights()) {
            detail = "checkpoint round trip diverged (kind " + to_string(cfg.kind) + ")";
            return false;
        }
    }
    detail = "all bitwise identities hold";
    return true;
}

bool criterion_toy_training(std::string& detail) {
    const int seeds = 10;
    // Fractions of the plain-SGD stability bound 2/L. Lookahead with k=5,
    // alpha=0.5 stays contracting in expectation up to about 1.12 * 2/L
    // (|1 - alpha + alpha (1 - gamma L)^k| < 1), so 1.06 sits inside its
    // window and outside SGD's. Batches of 128 keep the minibatch Hessian
    // noise small enough that both boundaries are sharp.
    const std::vector<double> fracs{0.5, 0.9, 1.06};
    int sgd_cells = 0, la_cells = 0;
    bool la_superset = true;

    for (double frac : fracs) {
        bool sgd_ok = true, la_ok = true;
        for (int s = 0; s < seeds; ++s) {
            DatasetSpec spec;
            spec.features = 8;
            spec.count = 256;
            spec.seed = 900 + s;
            spec.noise = 0.5;
            const SyntheticDataset ds = make_dataset(spec);
            const ToyModel model(ToyModel::Kind::LinearRegression, 8);
            const double gamma = frac * 2.0 / data_max_curvature(ds);

            TrainSetup plain;
            plain.optimizer.inner.kind = OptimizerKind::Sgd;
            plain.optimizer.inner.learning_rate = gamma;
            plain.epochs = 300;
            plain.batch_size = 128;
            plain.seed = 950 + s;
            TrainSetup wrapped = plain;
            LookaheadSetup la;
            la.k = 5;
            la.alpha = 0.5;
            wrapped.optimizer.lookahead = la;

            if (train(model, ds, nullptr, plain).diverged) sgd_ok = false;
            if (train(model, ds, nullptr, wrapped).diverged) la_ok = false;
        }
        sgd_cells += sgd_ok;
        la_cells += la_ok;
        if (sgd_ok && !la_ok) la_superset = false;
    }

    // outer-step recovery of the held-out loss
    double before = 0.0, after = 0.0;
    for (int s = 0; s < seeds; ++s) {
        DatasetSpec spec;
        spec.features = 8;
        spec.count = 256;
        spec.seed = 1900 + s;
        spec.noise = 0.5;
        const SyntheticDataset ds = make_dataset(spec);
        DatasetSpec espec = spec;
        espec.count = 128;
        espec.seed = 2900 + s;
        espec.teacher_seed = spec.seed;
        const SyntheticDataset ev = make_dataset(espec);
        const ToyModel model(ToyModel::Kind::LinearRegression, 8);

        TrainSetup setup;
        setup.optimizer.inner.kind = OptimizerKind::Sgd;
        setup.optimizer.inner.learning_rate = 0.5 * 2.0 / data_max_curvature(ds);
        setup.epochs = 60;
        setup.seed = 3900 + s;
        setup.trace = true;
        LookaheadSetup la;
        setup.optimizer.lookahead = la;
        const RunRecord rec = train(model, ds, &ev, setup);

        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i + 1 < rec.trace.size(); ++i)
            if (rec.trace[i + 1].phase == "outer" && rec.trace[i].phase == "inner")
                pairs.emplace_back(rec.trace[i].heldout_loss, rec.trace[i + 1].heldout_loss);
        if (pairs.size() < 50) {
            detail = "not enough outer steps recorded";
            return false;
        }
        for (std::size_t i = pairs.size() - 50; i < pairs.size(); ++i) {
            before += pairs[i].first;
            after += pairs[i].second;
        }
    }

    detail = "stable cells sgd " + std::to_string(sgd_cells) + "/3, lookahead " +
             std::to_string(la_cells) + "/3; recovery " + std::to_string(after / (50.0 * seeds)) +
             " <= " + std::to_string(before / (50.0 * seeds));
    return la_superset && la_cells > sgd_cells && after <= before;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "variance fixed-point equality (rel 1e-10, 200 draws)", criterion_fixed_point_equality},
        {2, "variance-reduction inequality (10^4 draws)", criterion_variance_reduction},
        {3, "monte-carlo agreement (4 SE, 10^4 seeds)", criterion_monte_carlo},
        {4, "dynamical-system rate validity (1e-3 log-slope, 50 draws)", criterion_rate_validity},
        {5, "under/overdamped regimes at beta=0.9, k=20, alpha=0.5", criterion_quad_figure},
        {6, "finite-horizon dominance (100x50 grid, k=5, T<=1000)", criterion_nqm_dominance},
        {7, "taylor exactness, cubic order, footnote identity", criterion_taylor},
        {8, "alpha* optimality and adaptive agreement", criterion_alpha_star},
        {9, "optimizer identity suite (bitwise)", criterion_identity_suite},
        {10, "toy-training stability window and outer-step recovery", criterion_toy_training},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] %2d. %s — %s (%.2fs)\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d criterion(s) FAILED\n", failures);
    else std::printf("all %zu criteria passed\n", criteria.size());
    return failures;
}
