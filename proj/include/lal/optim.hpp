#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "lal/param_ops.hpp"

namespace lal {

enum class OptimizerKind { Sgd, Momentum, Adam };
enum class MomentumMode { Maintain, Interpolate, Reset };

std::string to_string(OptimizerKind k);
std::string to_string(MomentumMode m);
OptimizerKind optimizer_kind_from_string(const std::string& s);
MomentumMode momentum_mode_from_string(const std::string& s);

struct InnerConfig {
    OptimizerKind kind = OptimizerKind::Sgd;
    double learning_rate = 0.1;
    double momentum = 0.9;  // classical momentum only
    double beta1 = 0.9;     // Adam only
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

// Plain gradient-descent update, params - lr * grad.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double learning_rate);

// One of SGD / classical momentum (heavy ball) / Adam with its state buffers.
//
// Classical momentum is stored as a velocity vector v_t = theta_t - theta_{t-1},
// which makes the update theta_{t+1} = theta_t - eta*grad + beta*v_t identical
// to the previous-iterate form theta_{t+1} = theta_t - eta*grad
// + beta*(theta_t - theta_{t-1}) within an inner cycle, and carries the
// momentum across slow-weight interpolations (where the previous-iterate form
// is ambiguous). First step uses v_0 = 0, i.e. theta_{-1} = theta_0.
class InnerOptimizer {
  public:
    struct Buffers {
        ParamVector velocity;    // classical momentum
        ParamVector m, v;        // Adam first/second moment
        long step_count = 0;     // Adam bias-correction step
    };

    explicit InnerOptimizer(InnerConfig cfg);

    // Applies one update in place. Buffers are sized on first use.
    void step(ParamVector& params, const ParamVector& grad);

    const InnerConfig& config() const { return cfg_; }
    const Buffers& buffers() const { return buf_; }
    void set_buffers(Buffers b) { buf_ = std::move(b); }
    void reset_buffers();

    // Step-decay hook for the harness.
    void set_learning_rate(double lr);

    // Bias-corrected second-moment estimate (the diagonal empirical-Fisher
    // proxy Adam maintains), floored at `floor_eps`. Adam only.
    ParamVector fisher_diag(double floor_eps = 1e-8) const;

    nlohmann::json to_json() const;
    static InnerOptimizer from_json(const nlohmann::json& j);

  private:
    void ensure_buffers(std::size_t n);

    InnerConfig cfg_;
    Buffers buf_;
};

// Lookahead wrapper: k fast-weight steps by the inner optimizer, then a slow
// interpolation phi += alpha * (theta_k - phi) and fast-weight reset.
//
// Inner-optimizer buffers at the outer boundary follow `mode`:
//   Maintain    - keep buffers as they are (default);
//   Reset       - zero buffers;
//   Interpolate - buffers <- start + alpha * (now - start), where `start` is
//                 a snapshot taken at the beginning of the inner cycle. For
//                 Adam both moments are interpolated independently and the
//                 second moment is clamped at 0; the bias-correction counter
//                 keeps running.
class LookaheadOptimizer {
  public:
    LookaheadOptimizer(ParamVector init, int k, double alpha, MomentumMode mode,
                       InnerOptimizer inner);

    // One fast-weight step. Throws ProtocolError once k steps have
    // accumulated without an outer step.
    void inner_step(const ParamVector& grad);

    // The slow-weight interpolation; requires fast_step_counter() == k.
    // Establishes fast_weights == slow_weights bit for bit.
    void outer_step() { outer_step(alpha_); }
    void outer_step(double alpha);

    // Convenience: inner step, then outer step when the cycle completes.
    void step(const ParamVector& grad);

    bool outer_step_due() const { return fast_step_counter_ == k_; }
    int fast_step_counter() const { return fast_step_counter_; }
    int k() const { return k_; }
    double alpha() const { return alpha_; }
    MomentumMode momentum_mode() const { return mode_; }
    const ParamVector& fast_weights() const { return fast_; }
    const ParamVector& slow_weights() const { return slow_; }
    const InnerOptimizer& inner() const { return inner_; }
    void set_inner_learning_rate(double lr) { inner_.set_learning_rate(lr); }

    // Versioned checkpoint of the full state (weights, counters, buffers).
    nlohmann::json to_json() const;
    static LookaheadOptimizer from_json(const nlohmann::json& j);

  private:
    ParamVector slow_, fast_;
    int k_;
    double alpha_;
    int fast_step_counter_ = 0;
    MomentumMode mode_;
    InnerOptimizer inner_;
    InnerOptimizer::Buffers cycle_start_buffers_;  // Interpolate mode snapshot
};

// Diagonal quadratic L(x) = 1/2 x^T A x - b^T x with A = diag(a), a_i > 0.
struct QuadraticProblem {
    ParamVector a;
    ParamVector b;

    std::size_t dim() const { return a.size(); }
    ParamVector minimizer() const;  // A^{-1} b
    double loss(const ParamVector& x) const;
    ParamVector grad(const ParamVector& x) const;  // A x - b
    void validate() const;
};

// Step size minimizing L along phi(alpha) = theta0 + alpha * (theta_k - theta0):
//   alpha* = (theta0 - theta*)^T A (theta0 - theta_k)
//            / (theta0 - theta_k)^T A (theta0 - theta_k).
// Unclipped; may lie outside [0, 1]. Throws DegenerateDirectionError when the
// denominator is below 1e-12 relative to max_i(a_i) * |theta0|^2.
double exact_alpha_star(const QuadraticProblem& prob, const ParamVector& theta0,
                        const ParamVector& theta_k);

// Curvature-estimated variant: approximates theta* by
// theta_k - Ahat^{-1} grad(theta_k) with Ahat = diag(fisher) and clips the
// result into [alpha_low, 1]. A degenerate direction (theta0 == theta_k)
// returns `fallback_alpha`, the configured fixed step size.
double adaptive_alpha(const ParamVector& theta0, const ParamVector& theta_k,
                      const ParamVector& fisher_diag, const ParamVector& grad_at_theta_k,
                      double alpha_low, double fallback_alpha);

double adaptive_alpha(const LookaheadOptimizer& state, const ParamVector& fisher_diag,
                      const ParamVector& grad_at_theta_k, double alpha_low);

// Running arithmetic mean of squared gradients: the empirical-Fisher diagonal
// used by adaptive alpha when the inner optimizer (SGD, momentum) does not
// track second moments itself.
class FisherTracker {
  public:
    void observe(const ParamVector& grad);
    ParamVector fisher_diag(double floor_eps = 1e-8) const;
    bool empty() const { return count_ == 0; }

    nlohmann::json to_json() const;
    static FisherTracker from_json(const nlohmann::json& j);

  private:
    ParamVector mean_sq_;
    long count_ = 0;
};

}  // namespace lal
