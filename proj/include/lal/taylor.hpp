#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lal/param_ops.hpp"
#include "lal/rng.hpp"

namespace lal {

// A differentiable task: loss, gradient, and Hessian-vector product. Dense
// Hessians are never formed; curvature enters through hvp only.
struct Task {
    std::function<double(const ParamVector&)> loss;
    std::function<ParamVector(const ParamVector&)> grad;
    std::function<ParamVector(const ParamVector&, const ParamVector&)> hvp;
};

// Seeded generator of i.i.d. tasks (exchangeability matters: the identity
// E[H_1 g_0] = 1/2 d/dphi E[g_0 . g_1] needs identically distributed tasks).
class TaskFamily {
  public:
    virtual ~TaskFamily() = default;
    virtual std::size_t dim() const = 0;
    virtual Task sample(Rng& rng) const = 0;
};

// L_i(phi) = 1/2 (phi - c_i)^T Q (phi - c_i) with fixed diagonal Q and
// c_i ~ N(center_mean, center_stddev^2 I). Gradients are affine, so the
// two-step expansion is exact.
class QuadraticTaskFamily : public TaskFamily {
  public:
    QuadraticTaskFamily(ParamVector q, ParamVector center_mean, double center_stddev);
    std::size_t dim() const override { return q_.size(); }
    Task sample(Rng& rng) const override;
    const ParamVector& curvature() const { return q_; }
    const ParamVector& center_mean() const { return mu_; }
    double center_stddev() const { return stddev_; }

  private:
    ParamVector q_, mu_;
    double stddev_;
};

// Ridge-regularized binary logistic regression on a fixed random design;
// labels are resampled per task from a teacher model. Smooth with bounded
// third derivative, so prediction errors are genuinely cubic in eta.
class LogisticTaskFamily : public TaskFamily {
  public:
    LogisticTaskFamily(std::size_t examples, std::size_t features, double ridge,
                       std::uint64_t design_seed);
    std::size_t dim() const override { return features_; }
    Task sample(Rng& rng) const override;

  private:
    std::size_t examples_, features_;
    double ridge_;
    std::vector<double> design_;        // row-major examples x features
    std::vector<double> teacher_prob_;  // sigmoid(X w*)
};

// k sequential gradient-descent steps, one per task, starting at phi0.
ParamVector unrolled_gd(const ParamVector& phi0, const std::vector<Task>& tasks, double eta);

// Second-order prediction of two GD steps:
//   phi0 - eta (g0 + g1)(phi0) + eta^2 H1(phi0) g0(phi0),
// computed with a single hvp. Exact when gradients are affine.
ParamVector taylor_two_step_prediction(const ParamVector& phi0, const Task& task0,
                                       const Task& task1, double eta);

// Sampled estimate of the expected k-step update
//   phi0 - eta sum_i E[g_i] + eta^2/2 d/dphi sum_{i>j} E[g_i . g_j],
// with the gradient-of-dot-product term evaluated per sample as symmetric
// hvp pairs (H_i g_j + H_j g_i). Streams are derived per sample, so results
// are independent of threading.
ParamVector expected_update_prediction(const ParamVector& phi0, const TaskFamily& family,
                                       double eta, int k, long samples, std::uint64_t seed);

// Predicted slow-weight update: phi0 + alpha * (predicted E[phi_k] - phi0);
// the displacement scales linearly in alpha.
ParamVector lookahead_update_prediction(const ParamVector& phi0, const TaskFamily& family,
                                        double eta, int k, double alpha, long samples,
                                        std::uint64_t seed);

// sum_{i>j} g_i(phi) . g_j(phi): the alignment objective whose gradient is the
// regularizer hidden in the slow-weight update.
double gradient_alignment(const ParamVector& phi, const std::vector<Task>& tasks);

// Central finite difference of the gradient along v, step 1e-6 * (1 + |v|).
ParamVector hvp_finite_difference(const Task& task, const ParamVector& phi, const ParamVector& v);

// JSON report for the CLI and acceptance suite: quadratic exactness, cubic
// error-ratio rows {eta, error, ratio, se}, and the footnote-identity check.
nlohmann::json taylor_check_report(std::uint64_t seed, long samples);

}  // namespace lal
