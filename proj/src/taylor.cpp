#include "lal/taylor.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "lal/parallel.hpp"

namespace lal {

using nlohmann::json;

QuadraticTaskFamily::QuadraticTaskFamily(ParamVector q, ParamVector center_mean,
                                         double center_stddev)
    : q_(std::move(q)), mu_(std::move(center_mean)), stddev_(center_stddev) {
    check_same_length(q_, mu_, "quadratic task family");
    for (double qi : q_)
        if (!(qi > 0.0)) throw ConfigError("task curvature entries must be > 0");
    if (!(stddev_ >= 0.0)) throw ConfigError("center stddev must be >= 0");
}

Task QuadraticTaskFamily::sample(Rng& rng) const {
    ParamVector c(mu_.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = mu_[i] + stddev_ * rng.normal();
    const ParamVector q = q_;
    Task t;
    t.loss = [q, c](const ParamVector& w) {
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += 0.5 * q[i] * (w[i] - c[i]) * (w[i] - c[i]);
        return s;
    };
    t.grad = [q, c](const ParamVector& w) {
        ParamVector g(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) g[i] = q[i] * (w[i] - c[i]);
        return g;
    };
    t.hvp = [q](const ParamVector& w, const ParamVector& v) {
        ParamVector h(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) h[i] = q[i] * v[i];
        return h;
    };
    return t;
}

LogisticTaskFamily::LogisticTaskFamily(std::size_t examples, std::size_t features, double ridge,
                                       std::uint64_t design_seed)
    : examples_(examples), features_(features), ridge_(ridge) {
    if (examples_ < 1 || features_ < 1) throw ConfigError("logistic family needs data");
    if (!(ridge_ >= 0.0)) throw ConfigError("ridge must be >= 0");
    Rng rng(design_seed);
    design_.resize(examples_ * features_);
    for (double& x : design_) x = rng.normal();
    ParamVector teacher(features_);
    for (double& w : teacher) w = rng.normal();
    teacher_prob_.resize(examples_);
    for (std::size_t r = 0; r < examples_; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < features_; ++c) z += design_[r * features_ + c] * teacher[c];
        teacher_prob_[r] = 1.0 / (1.0 + std::exp(-z));
    }
}

Task LogisticTaskFamily::sample(Rng& rng) const {
    std::vector<double> y(examples_);
    for (std::size_t r = 0; r < examples_; ++r) y[r] = rng.uniform01() < teacher_prob_[r] ? 1.0 : 0.0;

    // Closures own copies of what they need; tasks stay valid past the family.
    const std::vector<double> X = design_;
    const std::size_t m = examples_, d = features_;
    const double lam = ridge_;

    auto logits = [X, m, d](const ParamVector& w) {
        std::vector<double> z(m, 0.0);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < d; ++c) z[r] += X[r * d + c] * w[c];
        return z;
    };

    Task t;
    t.loss = [logits, y, m, lam](const ParamVector& w) {
        const auto z = logits(w);
        double s = 0.0;
        for (std::size_t r = 0; r < m; ++r)
            s += std::log1p(std::exp(-std::abs(z[r]))) + std::max(z[r], 0.0) - y[r] * z[r];
        s /= static_cast<double>(m);
        for (double wi : w) s += 0.5 * lam * wi * wi;
        return s;
    };
    t.grad = [logits, X, y, m, d, lam](const ParamVector& w) {
        const auto z = logits(w);
        ParamVector g(d, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            const double resid = 1.0 / (1.0 + std::exp(-z[r])) - y[r];
            for (std::size_t c = 0; c < d; ++c) g[c] += X[r * d + c] * resid;
        }
        for (std::size_t c = 0; c < d; ++c) g[c] = g[c] / static_cast<double>(m) + lam * w[c];
        return g;
    };
    t.hvp = [logits, X, m, d, lam](const ParamVector& w, const ParamVector& v) {
        const auto z = logits(w);
        ParamVector h(d, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            const double p = 1.0 / (1.0 + std::exp(-z[r]));
            double xv = 0.0;
            for (std::size_t c = 0; c < d; ++c) xv += X[r * d + c] * v[c];
            const double s = p * (1.0 - p) * xv;
            for (std::size_t c = 0; c < d; ++c) h[c] += X[r * d + c] * s;
        }
        for (std::size_t c = 0; c < d; ++c) h[c] = h[c] / static_cast<double>(m) + lam * v[c];
        return h;
    };
    return t;
}

ParamVector unrolled_gd(const ParamVector& phi0, const std::vector<Task>& tasks, double eta) {
    if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
    ParamVector phi = phi0;
    for (const Task& t : tasks) {
        const ParamVector g = t.grad(phi);
        check_same_length(phi, g, "unrolled_gd");
        for (std::size_t i = 0; i < phi.size(); ++i) phi[i] -= eta * g[i];
        check_finite(phi, "unrolled_gd iterate");
    }
    return phi;
}

ParamVector taylor_two_step_prediction(const ParamVector& phi0, const Task& task0,
                                       const Task& task1, double eta) {
    const ParamVector g0 = task0.grad(phi0);
    const ParamVector g1 = task1.grad(phi0);
    const ParamVector h = task1.hvp(phi0, g0);
    ParamVector out(phi0.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = phi0[i] - eta * (g0[i] + g1[i]) + eta * eta * h[i];
    return out;
}

namespace {

struct SampleAccumulator {
    ParamVector sum, sumsq;
    explicit SampleAccumulator(std::size_t n) : sum(n, 0.0), sumsq(n, 0.0) {}
    void add(const ParamVector& x) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            sum[i] += x[i];
            sumsq[i] += x[i] * x[i];
        }
    }
};

// Per-sample second-order prediction of the k-step expected update.
ParamVector sample_prediction(const ParamVector& phi0, const std::vector<Task>& tasks,
                              double eta) {
    const std::size_t n = phi0.size();
    const int k = static_cast<int>(tasks.size());
    std::vector<ParamVector> grads(k);
    for (int i = 0; i < k; ++i) grads[i] = tasks[i].grad(phi0);

    ParamVector first(n, 0.0), second(n, 0.0);
    for (int i = 0; i < k; ++i)
        for (std::size_t c = 0; c < n; ++c) first[c] += grads[i][c];
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < i; ++j) {
            // d/dphi (g_i . g_j) = H_i g_j + H_j g_i
            const ParamVector hij = tasks[i].hvp(phi0, grads[j]);
            const ParamVector hji = tasks[j].hvp(phi0, grads[i]);
            for (std::size_t c = 0; c < n; ++c) second[c] += hij[c] + hji[c];
        }
    }
    ParamVector out(n);
    for (std::size_t c = 0; c < n; ++c)
        out[c] = phi0[c] - eta * first[c] + 0.5 * eta * eta * second[c];
    return out;
}

}  // namespace

ParamVector expected_update_prediction(const ParamVector& phi0, const TaskFamily& family,
                                       double eta, int k, long samples, std::uint64_t seed) {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (samples < 1) throw ConfigError("samples must be >= 1");
    if (phi0.size() != family.dim()) throw DimensionError("phi0 length must match family dim");

    const std::size_t n = phi0.size();
    const std::size_t chunks = 64;
    std::vector<SampleAccumulator> acc(chunks, SampleAccumulator(n));
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<Task> tasks(k);
        for (long s = static_cast<long>(c); s < samples; s += static_cast<long>(chunks)) {
            Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s));
            for (int i = 0; i < k; ++i) tasks[i] = family.sample(rng);
            acc[c].add(sample_prediction(phi0, tasks, eta));
        }
    });
    ParamVector mean(n, 0.0);
    for (const auto& a : acc)
        for (std::size_t i = 0; i < n; ++i) mean[i] += a.sum[i];
    for (std::size_t i = 0; i < n; ++i) mean[i] /= static_cast<double>(samples);
    return mean;
}

ParamVector lookahead_update_prediction(const ParamVector& phi0, const TaskFamily& family,
                                        double eta, int k, double alpha, long samples,
                                        std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    ParamVector pred = expected_update_prediction(phi0, family, eta, k, samples, seed);
    if (alpha == 1.0) return pred;  // degenerate interpolation, exactly the inner update
    for (std::size_t i = 0; i < pred.size(); ++i)
        pred[i] = phi0[i] + alpha * (pred[i] - phi0[i]);
    return pred;
}

double gradient_alignment(const ParamVector& phi, const std::vector<Task>& tasks) {
    if (tasks.size() < 2) throw ConfigError("gradient_alignment needs at least 2 tasks");
    std::vector<ParamVector> grads(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) grads[i] = tasks[i].grad(phi);
    double s = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) s += dot(grads[i], grads[j]);
    return s;
}

ParamVector hvp_finite_difference(const Task& task, const ParamVector& phi,
                                  const ParamVector& v) {
    const double vn = norm2(v);
    if (vn == 0.0) return ParamVector(phi.size(), 0.0);
    const double h = 1e-6 * (1.0 + vn);
    ParamVector plus = phi, minus = phi;
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double step = h * v[i] / vn;
        plus[i] += step;
        minus[i] -= step;
    }
    const ParamVector gp = task.grad(plus);
    const ParamVector gm = task.grad(minus);
    ParamVector out(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) out[i] = vn * (gp[i] - gm[i]) / (2.0 * h);
    return out;
}

json taylor_check_report(std::uint64_t seed, long samples) {
    json report;

    // Exactness on quadratics: affine gradients make the two-step expansion exact.
    double quad_max_err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng = Rng::stream(seed, 1000 + trial);
        const std::size_t n = 1 + (trial % 6);
        ParamVector q(n), mu(n), phi0(n);
        for (std::size_t i = 0; i < n; ++i) {
            q[i] = 0.2 + 2.0 * rng.uniform01();
            mu[i] = rng.normal();
            phi0[i] = rng.normal();
        }
        QuadraticTaskFamily family(q, mu, 1.0);
        const double eta = 0.02 + 0.3 * rng.uniform01();
        Rng task_rng = Rng::stream(seed, 2000 + trial);
        std::vector<Task> tasks{family.sample(task_rng), family.sample(task_rng)};
        const ParamVector unrolled = unrolled_gd(phi0, tasks, eta);
        const ParamVector pred = taylor_two_step_prediction(phi0, tasks[0], tasks[1], eta);
        for (std::size_t i = 0; i < n; ++i)
            quad_max_err = std::max(quad_max_err, std::abs(unrolled[i] - pred[i]));
    }
    report["quadratic_max_error"] = quad_max_err;

    // Cubic error order on the logistic family: halving eta should divide the
    // prediction error by about 8.
    const std::vector<double> etas = {1e-2, 5e-3, 2.5e-3};
    const int n_seeds = 20;
    std::vector<std::vector<double>> errs(etas.size(), std::vector<double>(n_seeds));
    for (int s = 0; s < n_seeds; ++s) {
        LogisticTaskFamily family(32, 4, 0.1, seed + 77 + static_cast<std::uint64_t>(s));
        Rng rng = Rng::stream(seed, 3000 + s);
        const Task t0 = family.sample(rng);
        const Task t1 = family.sample(rng);
        ParamVector phi0(family.dim());
        for (double& x : phi0) x = 0.5 * rng.normal();
        for (std::size_t e = 0; e < etas.size(); ++e) {
            const ParamVector unrolled = unrolled_gd(phi0, {t0, t1}, etas[e]);
            const ParamVector pred = taylor_two_step_prediction(phi0, t0, t1, etas[e]);
            double err = 0.0;
            for (std::size_t i = 0; i < phi0.size(); ++i)
                err += (unrolled[i] - pred[i]) * (unrolled[i] - pred[i]);
            errs[e][s] = std::sqrt(err);
        }
    }
    json rows = json::array();
    bool ratios_in_range = true;
    for (std::size_t e = 0; e < etas.size(); ++e) {
        double mean_err = 0.0;
        for (double x : errs[e]) mean_err += x;
        mean_err /= n_seeds;
        json row;
        row["eta"] = etas[e];
        row["error"] = mean_err;
        if (e > 0) {
            double mean_ratio = 0.0, var_ratio = 0.0;
            std::vector<double> ratios(n_seeds);
            for (int s = 0; s < n_seeds; ++s) {
                ratios[s] = errs[e - 1][s] / errs[e][s];
                mean_ratio += ratios[s];
                if (ratios[s] < 6.0 || ratios[s] > 10.0) ratios_in_range = false;
            }
            mean_ratio /= n_seeds;
            for (double r : ratios) var_ratio += (r - mean_ratio) * (r - mean_ratio);
            row["ratio"] = mean_ratio;
            row["se"] = std::sqrt(var_ratio / (n_seeds - 1.0) / n_seeds);
        } else {
            row["ratio"] = nullptr;
            row["se"] = nullptr;
        }
        rows.push_back(row);
    }
    report["cubic_order"] = rows;
    report["ratios_in_range"] = ratios_in_range;

    // Footnote identity under exchangeable sampling: per sample the paired
    // difference H_1 g_0 - 1/2 FD[g_0 . g_1] has mean zero per coordinate.
    {
        LogisticTaskFamily family(32, 4, 0.1, seed + 555);
        Rng init_rng = Rng::stream(seed, 4000);
        ParamVector phi0(family.dim());
        for (double& x : phi0) x = 0.5 * init_rng.normal();
        const std::size_t n = phi0.size();
        const double h = 1e-6;

        SampleAccumulator acc(n);
        for (long s = 0; s < samples; ++s) {
            Rng rng = Rng::stream(seed, 5000 + static_cast<std::uint64_t>(s));
            const Task t0 = family.sample(rng);
            const Task t1 = family.sample(rng);
            const ParamVector hvp = t1.hvp(phi0, t0.grad(phi0));
            ParamVector diff(n);
            for (std::size_t j = 0; j < n; ++j) {
                ParamVector plus = phi0, minus = phi0;
                plus[j] += h;
                minus[j] -= h;
                const double fd =
                    (dot(t0.grad(plus), t1.grad(plus)) - dot(t0.grad(minus), t1.grad(minus))) /
                    (2.0 * h);
                diff[j] = hvp[j] - 0.5 * fd;
            }
            acc.add(diff);
        }
        double max_z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double mean = acc.sum[j] / samples;
            const double var =
                std::max(0.0, (acc.sumsq[j] - samples * mean * mean) / (samples - 1.0));
            const double se = std::sqrt(var / samples);
            max_z = std::max(max_z, std::abs(mean) / (se > 0.0 ? se : 1.0));
        }
        report["identity_max_z"] = max_z;
        report["identity_pass"] = max_z < 4.0;
    }
    return report;
}

}  // namespace lal
