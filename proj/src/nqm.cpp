#include "lal/nqm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "lal/parallel.hpp"
#include "lal/rng.hpp"

namespace lal {

double NoisyQuadraticModel::max_curvature() const {
    return *std::max_element(a.begin(), a.end());
}

void NoisyQuadraticModel::validate() const {
    if (a.empty()) throw ConfigError("model dimension must be >= 1");
    check_same_length(a, sigma2, "noisy quadratic model");
    for (double ai : a)
        if (!(ai > 0.0)) throw ConfigError("curvature entries must be > 0");
    for (double s : sigma2)
        if (!(s >= 0.0)) throw ConfigError("noise variances must be >= 0");
}

NoisyQuadraticModel NoisyQuadraticModel::spectrum(const std::string& name, std::size_t n) {
    if (n < 1) throw ConfigError("spectrum size must be >= 1");
    NoisyQuadraticModel m;
    m.a.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double idx = static_cast<double>(i + 1);
        if (name == "uniform")
            m.a[i] = 1.0;
        else if (name == "one_over_i")
            m.a[i] = 1.0 / idx;
        else if (name == "one_over_i2")
            m.a[i] = 1.0 / (idx * idx);
        else
            throw ConfigError("unknown spectrum: " + name);
    }
    m.sigma2.resize(n);
    for (std::size_t i = 0; i < n; ++i) m.sigma2[i] = 1.0 / m.a[i];
    return m;
}

NoisyQuadraticModel load_spectrum_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open spectrum file: " + path);
    NoisyQuadraticModel m;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        m.a.push_back(std::stod(line));
    }
    m.sigma2.resize(m.a.size());
    for (std::size_t i = 0; i < m.a.size(); ++i) m.sigma2[i] = 1.0 / m.a[i];
    m.validate();
    return m;
}

double noise_floor(const NoisyQuadraticModel& model) {
    double s = 0.0;
    for (std::size_t i = 0; i < model.dim(); ++i) s += model.a[i] * model.sigma2[i];
    return 0.5 * s;
}

double expected_loss(const MomentState& m, const NoisyQuadraticModel& model) {
    check_same_length(m.mean, model.a, "expected_loss mean");
    check_same_length(m.var, model.a, "expected_loss var");
    double s = 0.0;
    for (std::size_t i = 0; i < model.dim(); ++i)
        s += model.a[i] * (m.mean[i] * m.mean[i] + m.var[i] + model.sigma2[i]);
    return 0.5 * s;
}

namespace {

void check_stability(double gamma, const NoisyQuadraticModel& model, bool allow_zero) {
    const double L = model.max_curvature();
    const double lo = allow_zero ? 0.0 : 1e-300;
    if (!(gamma >= lo) || !(gamma * L < 2.0)) {
        std::ostringstream msg;
        msg << "learning rate " << gamma << " violates the stability bound 2/L = " << 2.0 / L;
        throw StabilityError(msg.str());
    }
}

}  // namespace

MomentState sgd_moment_step(const MomentState& m, double gamma, const NoisyQuadraticModel& model) {
    model.validate();
    check_stability(gamma, model, /*allow_zero=*/true);
    check_same_length(m.mean, model.a, "sgd_moment_step");
    MomentState out = m;
    for (std::size_t i = 0; i < model.dim(); ++i) {
        const double r = 1.0 - gamma * model.a[i];
        out.mean[i] = r * m.mean[i];
        out.var[i] = r * r * m.var[i] +
                     gamma * gamma * model.a[i] * model.a[i] * model.sigma2[i];
    }
    return out;
}

MomentState lookahead_moment_step(const MomentState& m, double gamma, double alpha, int k,
                                  const NoisyQuadraticModel& model) {
    model.validate();
    check_stability(gamma, model, /*allow_zero=*/true);
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    check_same_length(m.mean, model.a, "lookahead_moment_step");
    MomentState out = m;
    for (std::size_t i = 0; i < model.dim(); ++i) {
        const double r = 1.0 - gamma * model.a[i];
        const double rk = ipow(r, k);
        const double u = (1.0 - alpha) + alpha * rk;
        // sum_{j=0}^{k-1} r^{2j}
        const double r2 = r * r;
        const double geom = (r2 == 1.0) ? static_cast<double>(k) : (1.0 - ipow(r2, k)) / (1.0 - r2);
        const double inject = gamma * gamma * model.a[i] * model.a[i] * model.sigma2[i];
        out.mean[i] = u * m.mean[i];
        out.var[i] = u * u * m.var[i] + alpha * alpha * geom * inject;
    }
    return out;
}

ParamVector sgd_variance_fixed_point(double gamma, const NoisyQuadraticModel& model) {
    model.validate();
    check_stability(gamma, model, /*allow_zero=*/false);
    ParamVector fp(model.dim());
    for (std::size_t i = 0; i < model.dim(); ++i) {
        const double r = 1.0 - gamma * model.a[i];
        fp[i] = gamma * gamma * model.a[i] * model.a[i] * model.sigma2[i] / (1.0 - r * r);
    }
    return fp;
}

ParamVector lookahead_variance_fixed_point(double gamma, double alpha, int k,
                                           const NoisyQuadraticModel& model) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    ParamVector fp = sgd_variance_fixed_point(gamma, model);
    for (std::size_t i = 0; i < model.dim(); ++i) {
        const double r = 1.0 - gamma * model.a[i];
        const double rk = ipow(r, k);
        const double r2k = ipow(r * r, k);
        const double num = alpha * alpha * (1.0 - r2k);
        const double den = num + 2.0 * alpha * (1.0 - alpha) * (1.0 - rk);
        fp[i] *= num / den;
    }
    return fp;
}

McMoments monte_carlo_nqm(const NoisyQuadraticModel& model, const McSpec& spec) {
    model.validate();
    spec.inner.validate();
    if (spec.num_seeds < 1) throw ConfigError("num_seeds must be >= 1");
    if (spec.record_at.empty()) throw ConfigError("record_at must be non-empty");
    if (spec.x0.size() != model.dim()) throw DimensionError("x0 length must match model dim");

    std::vector<long> times = spec.record_at;
    std::sort(times.begin(), times.end());
    if (times.front() < 1) throw ConfigError("record times must be >= 1");
    const std::size_t n = model.dim();
    const std::size_t nt = times.size();
    const long max_time = times.back();

    ParamVector noise_sd(n);
    for (std::size_t i = 0; i < n; ++i) noise_sd[i] = std::sqrt(model.sigma2[i]);

    // Fixed chunking so the reduction order does not depend on worker count.
    const std::size_t chunks = 64;
    struct Partial {
        std::vector<ParamVector> sum, sumsq;
    };
    std::vector<Partial> partials(chunks);
    for (auto& p : partials) {
        p.sum.assign(nt, ParamVector(n, 0.0));
        p.sumsq.assign(nt, ParamVector(n, 0.0));
    }
    const long seeds = spec.num_seeds;

    parallel_for(chunks, [&](std::size_t c) {
        Partial& acc = partials[c];
        ParamVector grad(n), c_sample(n);
        for (long s = static_cast<long>(c); s < seeds; s += static_cast<long>(chunks)) {
            Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(s));
            InnerOptimizer inner(spec.inner);
            LookaheadOptimizer opt(spec.x0, spec.lookahead ? spec.k : 1,
                                   spec.lookahead ? spec.alpha : 1.0, spec.mode,
                                   std::move(inner));
            std::size_t next_rec = 0;
            const long inner_per_unit = spec.lookahead ? spec.k : 1;
            for (long t = 1; t <= max_time && next_rec < nt; ++t) {
                for (long j = 0; j < inner_per_unit; ++j) {
                    const ParamVector& x = opt.fast_weights();
                    for (std::size_t i = 0; i < n; ++i) {
                        c_sample[i] = noise_sd[i] * rng.normal();
                        grad[i] = model.a[i] * (x[i] - c_sample[i]);
                    }
                    opt.inner_step(grad);
                }
                opt.outer_step();
                while (next_rec < nt && times[next_rec] == t) {
                    const ParamVector& w = opt.slow_weights();
                    for (std::size_t i = 0; i < n; ++i) {
                        acc.sum[next_rec][i] += w[i];
                        acc.sumsq[next_rec][i] += w[i] * w[i];
                    }
                    ++next_rec;
                }
            }
        }
    });

    McMoments out;
    out.seed = spec.seed;
    out.times = times;
    out.mean.assign(nt, ParamVector(n, 0.0));
    out.var.assign(nt, ParamVector(n, 0.0));
    out.se_mean.assign(nt, ParamVector(n, 0.0));
    out.se_var.assign(nt, ParamVector(n, 0.0));
    const double N = static_cast<double>(seeds);
    for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0, sumsq = 0.0;
            for (const auto& p : partials) {
                sum += p.sum[t][i];
                sumsq += p.sumsq[t][i];
            }
            const double mean = sum / N;
            const double var = std::max(0.0, (sumsq - N * mean * mean) / (N - 1.0));
            out.mean[t][i] = mean;
            out.var[t][i] = var;
            out.se_mean[t][i] = std::sqrt(var / N);
            // SE of the sample variance under Gaussian iterates.
            out.se_var[t][i] = var * std::sqrt(2.0 / (N - 1.0));
        }
    }
    return out;
}

void SweepGrid::validate(const NoisyQuadraticModel& model) const {
    model.validate();
    if (gammas.empty() || alphas.empty()) throw ConfigError("sweep grids must be non-empty");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    for (double a : alphas)
        if (!(a > 0.0 && a <= 1.0)) throw ConfigError("sweep alphas must lie in (0, 1]");
}

std::vector<double> log_spaced(double lo, double hi, int count) {
    if (count < 1 || !(lo > 0.0) || !(hi > lo)) throw ConfigError("invalid log-spaced grid");
    std::vector<double> g(count);
    if (count == 1) {
        g[0] = lo;
        return g;
    }
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < count; ++i)
        g[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / (count - 1));
    g.front() = lo;
    g.back() = hi;  // exact endpoints (alpha grids must contain 1 exactly)
    return g;
}

std::vector<double> open_linear(double lo, double hi, int count) {
    if (count < 1 || !(hi > lo)) throw ConfigError("invalid linear grid");
    std::vector<double> g(count);
    for (int i = 0; i < count; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(count + 1);
    return g;
}

namespace {

struct UnrolledLoss {
    double at_horizon;
    double steady_state;
};

// Unrolls the SGD moment dynamics from E0 = 1, V0 = 0 for `steps` inner steps.
UnrolledLoss unroll_sgd(const NoisyQuadraticModel& model, double gamma, long steps) {
    MomentState m{ParamVector(model.dim(), 1.0), ParamVector(model.dim(), 0.0)};
    for (long t = 0; t < steps; ++t) m = sgd_moment_step(m, gamma, model);
    MomentState ss{ParamVector(model.dim(), 0.0), sgd_variance_fixed_point(gamma, model)};
    return {expected_loss(m, model), expected_loss(ss, model)};
}

UnrolledLoss unroll_lookahead(const NoisyQuadraticModel& model, double gamma, double alpha,
                              int k, long outer_steps) {
    MomentState m{ParamVector(model.dim(), 1.0), ParamVector(model.dim(), 0.0)};
    for (long t = 0; t < outer_steps; ++t) m = lookahead_moment_step(m, gamma, alpha, k, model);
    MomentState ss{ParamVector(model.dim(), 0.0),
                   lookahead_variance_fixed_point(gamma, alpha, k, model)};
    return {expected_loss(m, model), expected_loss(ss, model)};
}

}  // namespace

std::vector<ComparisonRow> convergence_comparison_sweep(const NoisyQuadraticModel& model,
                                                        const SweepGrid& grid) {
    grid.validate(model);
    const double bound = 2.0 / model.max_curvature();
    std::vector<double> gammas;
    for (double g : grid.gammas)
        if (g > 0.0 && g < bound) gammas.push_back(g);

    const std::size_t n_la = gammas.size() * grid.alphas.size();
    std::vector<ComparisonRow> rows(gammas.size() + n_la);
    parallel_for(gammas.size(), [&](std::size_t gi) {
        const double gamma = gammas[gi];
        const UnrolledLoss s = unroll_sgd(model, gamma, grid.horizon);
        rows[gi] = {"sgd", gamma, 0.0, 0, s.steady_state, s.at_horizon};
        for (std::size_t ai = 0; ai < grid.alphas.size(); ++ai) {
            const double alpha = grid.alphas[ai];
            const UnrolledLoss l =
                unroll_lookahead(model, gamma, alpha, grid.k, grid.horizon / grid.k);
            rows[gammas.size() + gi * grid.alphas.size() + ai] =
                {"lookahead", gamma, alpha, grid.k, l.steady_state, l.at_horizon};
        }
    });
    std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& x, const ComparisonRow& y) {
        return x.steady_state_loss < y.steady_state_loss;
    });
    return rows;
}

std::vector<HorizonBest> finite_horizon_sweep(const NoisyQuadraticModel& model,
                                              const SweepGrid& grid) {
    grid.validate(model);
    const double bound = 2.0 / model.max_curvature();
    for (double g : grid.gammas)
        if (!(g > 0.0 && g < bound))
            throw StabilityError("finite_horizon_sweep: grid learning rate outside (0, 2/L)");

    // Horizons are multiples of k so that every horizon corresponds to a
    // whole number of outer steps for Lookahead (equal gradient evaluations).
    std::vector<long> horizons;
    for (long h = grid.k; h <= grid.horizon; h += grid.k) horizons.push_back(h);
    const std::size_t nh = horizons.size();

    std::vector<HorizonBest> best(nh);
    for (std::size_t h = 0; h < nh; ++h) {
        best[h].horizon = horizons[h];
        best[h].sgd_loss = best[h].la_loss = std::numeric_limits<double>::infinity();
    }

    // Per-gamma scan, recording losses at each horizon along a single unroll.
    std::vector<std::vector<HorizonBest>> per_gamma(grid.gammas.size(), best);
    parallel_for(grid.gammas.size(), [&](std::size_t gi) {
        const double gamma = grid.gammas[gi];
        auto& mine = per_gamma[gi];
        MomentState m{ParamVector(model.dim(), 1.0), ParamVector(model.dim(), 0.0)};
        std::size_t h = 0;
        for (long t = 1; t <= grid.horizon && h < nh; ++t) {
            m = sgd_moment_step(m, gamma, model);
            if (t == horizons[h]) {
                const double loss = expected_loss(m, model);
                if (loss < mine[h].sgd_loss) {
                    mine[h].sgd_loss = loss;
                    mine[h].sgd_gamma = gamma;
                }
                ++h;
            }
        }
        for (double alpha : grid.alphas) {
            MomentState lm{ParamVector(model.dim(), 1.0), ParamVector(model.dim(), 0.0)};
            for (std::size_t hh = 0; hh < nh; ++hh) {
                const long outer = horizons[hh] / grid.k;
                const long prev = hh == 0 ? 0 : horizons[hh - 1] / grid.k;
                for (long t = prev; t < outer; ++t)
                    lm = lookahead_moment_step(lm, gamma, alpha, grid.k, model);
                const double loss = expected_loss(lm, model);
                if (loss < mine[hh].la_loss) {
                    mine[hh].la_loss = loss;
                    mine[hh].la_gamma = gamma;
                    mine[hh].la_alpha = alpha;
                }
            }
        }
    });
    for (const auto& mine : per_gamma) {
        for (std::size_t h = 0; h < nh; ++h) {
            if (mine[h].sgd_loss < best[h].sgd_loss) {
                best[h].sgd_loss = mine[h].sgd_loss;
                best[h].sgd_gamma = mine[h].sgd_gamma;
            }
            if (mine[h].la_loss < best[h].la_loss) {
                best[h].la_loss = mine[h].la_loss;
                best[h].la_gamma = mine[h].la_gamma;
                best[h].la_alpha = mine[h].la_alpha;
            }
        }
    }
    return best;
}

std::vector<HorizonRow> finite_horizon_table(const NoisyQuadraticModel& model,
                                             const SweepGrid& grid,
                                             const std::vector<long>& horizons) {
    grid.validate(model);
    for (long h : horizons)
        if (h < 1 || h % grid.k != 0)
            throw ConfigError("table horizons must be positive multiples of k");
    std::vector<long> hs = horizons;
    std::sort(hs.begin(), hs.end());

    const std::size_t per_gamma_rows = hs.size() * (1 + grid.alphas.size());
    std::vector<HorizonRow> rows(grid.gammas.size() * per_gamma_rows);
    parallel_for(grid.gammas.size(), [&](std::size_t gi) {
        const double gamma = grid.gammas[gi];
        HorizonRow* out = &rows[gi * per_gamma_rows];
        const double sgd_ss =
            expected_loss({ParamVector(model.dim(), 0.0), sgd_variance_fixed_point(gamma, model)},
                          model);
        MomentState m{ParamVector(model.dim(), 1.0), ParamVector(model.dim(), 0.0)};
        long t = 0;
        for (long h : hs) {
            for (; t < h; ++t) m = sgd_moment_step(m, gamma, model);
            *out++ = {"sgd", gamma, 0.0, 0, h, expected_loss(m, model), sgd_ss};
        }
        for (double alpha : grid.alphas) {
            const double la_ss = expected_loss(
                {ParamVector(model.dim(), 0.0),
                 lookahead_variance_fixed_point(gamma, alpha, grid.k, model)},
                model);
            MomentState lm{ParamVector(model.dim(), 1.0), ParamVector(model.dim(), 0.0)};
            long outer = 0;
            for (long h : hs) {
                for (; outer < h / grid.k; ++outer)
                    lm = lookahead_moment_step(lm, gamma, alpha, grid.k, model);
                *out++ = {"lookahead", gamma, alpha, grid.k, h, expected_loss(lm, model), la_ss};
            }
        }
    });
    return rows;
}

}  // namespace lal
