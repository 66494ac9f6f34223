#include "lal/optim.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace lal {

using nlohmann::json;

std::string to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::Momentum: return "momentum";
        case OptimizerKind::Adam: return "adam";
    }
    return "sgd";
}

std::string to_string(MomentumMode m) {
    switch (m) {
        case MomentumMode::Maintain: return "maintain";
        case MomentumMode::Interpolate: return "interpolate";
        case MomentumMode::Reset: return "reset";
    }
    return "maintain";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "momentum") return OptimizerKind::Momentum;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer kind: " + s);
}

MomentumMode momentum_mode_from_string(const std::string& s) {
    if (s == "maintain") return MomentumMode::Maintain;
    if (s == "interpolate") return MomentumMode::Interpolate;
    if (s == "reset") return MomentumMode::Reset;
    throw ConfigError("unknown momentum mode: " + s);
}

void InnerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (kind == OptimizerKind::Momentum && !(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("momentum must lie in [0, 1)");
    if (kind == OptimizerKind::Adam) {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("adam betas must lie in [0, 1)");
        if (!(epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    }
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double learning_rate) {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    check_same_length(params, grad, "sgd_step");
    check_finite(params, "sgd_step params");
    check_finite(grad, "sgd_step grad");
    ParamVector out(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] - learning_rate * grad[i];
    return out;
}

InnerOptimizer::InnerOptimizer(InnerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void InnerOptimizer::ensure_buffers(std::size_t n) {
    switch (cfg_.kind) {
        case OptimizerKind::Sgd:
            break;
        case OptimizerKind::Momentum:
            if (buf_.velocity.empty()) buf_.velocity.assign(n, 0.0);
            if (buf_.velocity.size() != n)
                throw DimensionError("momentum buffer length does not match parameters");
            break;
        case OptimizerKind::Adam:
            if (buf_.m.empty() && buf_.v.empty()) {
                buf_.m.assign(n, 0.0);
                buf_.v.assign(n, 0.0);
            }
            if (buf_.m.size() != n || buf_.v.size() != n)
                throw DimensionError("adam buffer length does not match parameters");
            break;
    }
}

void InnerOptimizer::step(ParamVector& params, const ParamVector& grad) {
    check_same_length(params, grad, "inner step");
    ensure_buffers(params.size());
    const std::size_t n = params.size();
    const double lr = cfg_.learning_rate;
    switch (cfg_.kind) {
        case OptimizerKind::Sgd:
            for (std::size_t i = 0; i < n; ++i) params[i] -= lr * grad[i];
            break;
        case OptimizerKind::Momentum:
            for (std::size_t i = 0; i < n; ++i) {
                const double v = cfg_.momentum * buf_.velocity[i] - lr * grad[i];
                buf_.velocity[i] = v;
                params[i] += v;
            }
            break;
        case OptimizerKind::Adam: {
            ++buf_.step_count;
            const double c1 = 1.0 - ipow(cfg_.beta1, buf_.step_count);
            const double c2 = 1.0 - ipow(cfg_.beta2, buf_.step_count);
            for (std::size_t i = 0; i < n; ++i) {
                buf_.m[i] = cfg_.beta1 * buf_.m[i] + (1.0 - cfg_.beta1) * grad[i];
                buf_.v[i] = cfg_.beta2 * buf_.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
                const double mhat = buf_.m[i] / c1;
                const double vhat = buf_.v[i] / c2;
                params[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
            }
            break;
        }
    }
}

void InnerOptimizer::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ConfigError("learning_rate must be > 0");
    cfg_.learning_rate = lr;
}

void InnerOptimizer::reset_buffers() {
    std::fill(buf_.velocity.begin(), buf_.velocity.end(), 0.0);
    std::fill(buf_.m.begin(), buf_.m.end(), 0.0);
    std::fill(buf_.v.begin(), buf_.v.end(), 0.0);
    buf_.step_count = 0;
}

ParamVector InnerOptimizer::fisher_diag(double floor_eps) const {
    if (cfg_.kind != OptimizerKind::Adam)
        throw ConfigError("fisher_diag: inner optimizer has no second-moment estimate");
    if (buf_.step_count == 0)
        throw ConfigError("fisher_diag: no steps taken yet");
    const double c2 = 1.0 - ipow(cfg_.beta2, buf_.step_count);
    ParamVector f(buf_.v.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::max(buf_.v[i] / c2, floor_eps);
    return f;
}

json InnerOptimizer::to_json() const {
    json j;
    j["kind"] = to_string(cfg_.kind);
    j["learning_rate"] = cfg_.learning_rate;
    switch (cfg_.kind) {
        case OptimizerKind::Sgd:
            break;
        case OptimizerKind::Momentum:
            j["momentum"] = cfg_.momentum;
            j["velocity"] = buf_.velocity;
            break;
        case OptimizerKind::Adam:
            j["adam_beta1"] = cfg_.beta1;
            j["adam_beta2"] = cfg_.beta2;
            j["adam_epsilon"] = cfg_.epsilon;
            j["m"] = buf_.m;
            j["v"] = buf_.v;
            j["step_count"] = buf_.step_count;
            break;
    }
    return j;
}

InnerOptimizer InnerOptimizer::from_json(const json& j) {
    InnerConfig cfg;
    cfg.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
    cfg.learning_rate = j.at("learning_rate").get<double>();
    Buffers buf;
    switch (cfg.kind) {
        case OptimizerKind::Sgd:
            break;
        case OptimizerKind::Momentum:
            cfg.momentum = j.at("momentum").get<double>();
            buf.velocity = j.at("velocity").get<ParamVector>();
            break;
        case OptimizerKind::Adam:
            cfg.beta1 = j.at("adam_beta1").get<double>();
            cfg.beta2 = j.at("adam_beta2").get<double>();
            cfg.epsilon = j.at("adam_epsilon").get<double>();
            buf.m = j.at("m").get<ParamVector>();
            buf.v = j.at("v").get<ParamVector>();
            buf.step_count = j.at("step_count").get<long>();
            break;
    }
    InnerOptimizer opt(cfg);
    opt.set_buffers(std::move(buf));
    return opt;
}

LookaheadOptimizer::LookaheadOptimizer(ParamVector init, int k, double alpha, MomentumMode mode,
                                       InnerOptimizer inner)
    : slow_(init), fast_(std::move(init)), k_(k), alpha_(alpha), mode_(mode),
      inner_(std::move(inner)) {
    if (slow_.empty()) throw ConfigError("parameter vector must be non-empty");
    check_finite(slow_, "initial parameters");
    if (k_ < 1) throw ConfigError("k must be >= 1");
    if (!(alpha_ > 0.0 && alpha_ <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    cycle_start_buffers_ = inner_.buffers();
}

void LookaheadOptimizer::inner_step(const ParamVector& grad) {
    if (fast_step_counter_ == k_)
        throw ProtocolError("inner_step called with a full cycle pending; outer_step required");
    inner_.step(fast_, grad);
    ++fast_step_counter_;
}

namespace {

// Buffers are sized lazily, so a snapshot taken before the first step may be
// shorter than the live buffer; missing entries are zeros.
void interpolate_buffer(ParamVector& now, const ParamVector& start, double alpha) {
    for (std::size_t i = 0; i < now.size(); ++i) {
        const double s = i < start.size() ? start[i] : 0.0;
        now[i] = s + alpha * (now[i] - s);
    }
}

}  // namespace

void LookaheadOptimizer::outer_step(double alpha) {
    if (fast_step_counter_ != k_)
        throw ProtocolError("outer_step called before k inner steps completed");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");

    if (alpha == 1.0) {
        // Degenerate interpolation: the slow weights adopt the fast weights
        // exactly, keeping the trajectory bitwise equal to the unwrapped
        // inner optimizer.
        slow_ = fast_;
    } else {
        for (std::size_t i = 0; i < slow_.size(); ++i)
            slow_[i] = slow_[i] + alpha * (fast_[i] - slow_[i]);
        fast_ = slow_;
    }
    fast_step_counter_ = 0;

    switch (mode_) {
        case MomentumMode::Maintain:
            break;
        case MomentumMode::Reset:
            inner_.reset_buffers();
            break;
        case MomentumMode::Interpolate: {
            if (alpha != 1.0) {
                InnerOptimizer::Buffers b = inner_.buffers();
                interpolate_buffer(b.velocity, cycle_start_buffers_.velocity, alpha);
                interpolate_buffer(b.m, cycle_start_buffers_.m, alpha);
                interpolate_buffer(b.v, cycle_start_buffers_.v, alpha);
                for (double& x : b.v) x = std::max(x, 0.0);
                inner_.set_buffers(std::move(b));
            }
            break;
        }
    }
    cycle_start_buffers_ = inner_.buffers();
}

void LookaheadOptimizer::step(const ParamVector& grad) {
    inner_step(grad);
    if (outer_step_due()) outer_step();
}

json LookaheadOptimizer::to_json() const {
    json j;
    j["version"] = 1;
    j["slow_weights"] = slow_;
    j["fast_weights"] = fast_;
    j["k"] = k_;
    j["alpha"] = alpha_;
    j["fast_step_counter"] = fast_step_counter_;
    j["momentum_mode"] = to_string(mode_);
    j["inner"] = inner_.to_json();
    if (mode_ == MomentumMode::Interpolate) {
        json snap;
        snap["velocity"] = cycle_start_buffers_.velocity;
        snap["m"] = cycle_start_buffers_.m;
        snap["v"] = cycle_start_buffers_.v;
        snap["step_count"] = cycle_start_buffers_.step_count;
        j["cycle_start_buffers"] = std::move(snap);
    }
    return j;
}

LookaheadOptimizer LookaheadOptimizer::from_json(const json& j) {
    const int version = j.at("version").get<int>();
    if (version != 1) throw ConfigError("unsupported checkpoint version");
    LookaheadOptimizer opt(j.at("slow_weights").get<ParamVector>(), j.at("k").get<int>(),
                           j.at("alpha").get<double>(),
                           momentum_mode_from_string(j.at("momentum_mode").get<std::string>()),
                           InnerOptimizer::from_json(j.at("inner")));
    opt.fast_ = j.at("fast_weights").get<ParamVector>();
    check_same_length(opt.slow_, opt.fast_, "checkpoint weights");
    opt.fast_step_counter_ = j.at("fast_step_counter").get<int>();
    if (opt.fast_step_counter_ < 0 || opt.fast_step_counter_ > opt.k_)
        throw ConfigError("fast_step_counter out of range");
    opt.cycle_start_buffers_ = opt.inner_.buffers();
    if (j.contains("cycle_start_buffers")) {
        const json& snap = j.at("cycle_start_buffers");
        opt.cycle_start_buffers_.velocity = snap.at("velocity").get<ParamVector>();
        opt.cycle_start_buffers_.m = snap.at("m").get<ParamVector>();
        opt.cycle_start_buffers_.v = snap.at("v").get<ParamVector>();
        opt.cycle_start_buffers_.step_count = snap.at("step_count").get<long>();
    }
    return opt;
}

ParamVector QuadraticProblem::minimizer() const {
    ParamVector m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = b[i] / a[i];
    return m;
}

double QuadraticProblem::loss(const ParamVector& x) const {
    check_same_length(x, a, "quadratic loss");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += 0.5 * a[i] * x[i] * x[i] - b[i] * x[i];
    return s;
}

ParamVector QuadraticProblem::grad(const ParamVector& x) const {
    check_same_length(x, a, "quadratic grad");
    ParamVector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = a[i] * x[i] - b[i];
    return g;
}

void QuadraticProblem::validate() const {
    check_same_length(a, b, "quadratic problem");
    for (double ai : a)
        if (!(ai > 0.0)) throw ConfigError("quadratic curvature entries must be > 0");
}

double exact_alpha_star(const QuadraticProblem& prob, const ParamVector& theta0,
                        const ParamVector& theta_k) {
    prob.validate();
    check_same_length(theta0, prob.a, "exact_alpha_star theta0");
    check_same_length(theta_k, prob.a, "exact_alpha_star theta_k");

    const ParamVector star = prob.minimizer();
    ParamVector d(theta0.size()), e(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        d[i] = theta0[i] - theta_k[i];
        e[i] = theta0[i] - star[i];
    }
    const double denom = weighted_dot(d, prob.a, d);
    const double a_max = *std::max_element(prob.a.begin(), prob.a.end());
    const double scale = a_max * dot(theta0, theta0);
    if (denom <= 1e-12 * scale)
        throw DegenerateDirectionError("exact_alpha_star: theta0 == theta_k (degenerate direction)");
    return weighted_dot(e, prob.a, d) / denom;
}

double adaptive_alpha(const ParamVector& theta0, const ParamVector& theta_k,
                      const ParamVector& fisher_diag, const ParamVector& grad_at_theta_k,
                      double alpha_low, double fallback_alpha) {
    if (!(alpha_low > 0.0 && alpha_low < 1.0)) throw ConfigError("alpha_low must lie in (0, 1)");
    check_same_length(theta0, theta_k, "adaptive_alpha");
    check_same_length(theta0, fisher_diag, "adaptive_alpha fisher");
    check_same_length(theta0, grad_at_theta_k, "adaptive_alpha grad");

    const std::size_t n = theta0.size();
    ParamVector f(n), d(n), e(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = std::max(fisher_diag[i], 1e-8);
        d[i] = theta0[i] - theta_k[i];
        // theta* approximated by theta_k - Ahat^{-1} grad(theta_k)
        e[i] = theta0[i] - (theta_k[i] - grad_at_theta_k[i] / f[i]);
    }
    const double denom = weighted_dot(d, f, d);
    const double f_max = *std::max_element(f.begin(), f.end());
    if (denom <= 1e-12 * f_max * dot(theta0, theta0)) return fallback_alpha;
    const double raw = weighted_dot(e, f, d) / denom;
    return std::clamp(raw, alpha_low, 1.0);
}

double adaptive_alpha(const LookaheadOptimizer& state, const ParamVector& fisher_diag,
                      const ParamVector& grad_at_theta_k, double alpha_low) {
    return adaptive_alpha(state.slow_weights(), state.fast_weights(), fisher_diag,
                          grad_at_theta_k, alpha_low, state.alpha());
}

void FisherTracker::observe(const ParamVector& grad) {
    if (mean_sq_.empty()) mean_sq_.assign(grad.size(), 0.0);
    check_same_length(mean_sq_, grad, "fisher tracker");
    ++count_;
    const double w = 1.0 / static_cast<double>(count_);
    for (std::size_t i = 0; i < grad.size(); ++i)
        mean_sq_[i] += w * (grad[i] * grad[i] - mean_sq_[i]);
}

ParamVector FisherTracker::fisher_diag(double floor_eps) const {
    if (count_ == 0) throw ConfigError("fisher tracker: no gradients observed");
    ParamVector f(mean_sq_.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::max(mean_sq_[i], floor_eps);
    return f;
}

json FisherTracker::to_json() const {
    json j;
    j["mean_sq"] = mean_sq_;
    j["count"] = count_;
    return j;
}

FisherTracker FisherTracker::from_json(const json& j) {
    FisherTracker t;
    t.mean_sq_ = j.at("mean_sq").get<ParamVector>();
    t.count_ = j.at("count").get<long>();
    return t;
}

}  // namespace lal
