#include "lal/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "lal/parallel.hpp"
#include "lal/rng.hpp"

namespace lal {

using nlohmann::json;

json DatasetSpec::to_json() const {
    json j;
    j["kind"] = kind == Kind::Regression ? "regression" : "classification";
    j["features"] = features;
    j["count"] = count;
    j["seed"] = seed;
    if (teacher_seed) j["teacher_seed"] = *teacher_seed;
    j["noise"] = noise;
    return j;
}

SyntheticDataset make_dataset(const DatasetSpec& spec) {
    if (spec.features < 1 || spec.count < 1) throw ConfigError("dataset must be non-empty");
    if (!(spec.noise >= 0.0)) throw ConfigError("noise must be >= 0");
    SyntheticDataset ds;
    ds.spec = spec;
    ds.inputs.resize(spec.count * spec.features);
    Rng input_rng = Rng::stream(spec.seed, 0);
    for (double& x : ds.inputs) x = input_rng.normal();
    Rng teacher_rng = Rng::stream(spec.teacher_seed.value_or(spec.seed), 1);
    ds.teacher.resize(spec.features);
    for (double& w : ds.teacher) w = teacher_rng.normal();

    Rng label_rng = Rng::stream(spec.seed, 2);
    ds.targets.resize(spec.count);
    for (std::size_t r = 0; r < spec.count; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < spec.features; ++c)
            z += ds.inputs[r * spec.features + c] * ds.teacher[c];
        if (spec.kind == DatasetSpec::Kind::Regression) {
            ds.targets[r] = z + spec.noise * label_rng.normal();
        } else {
            const double p = 1.0 / (1.0 + std::exp(-z));
            double y = label_rng.uniform01() < p ? 1.0 : 0.0;
            if (spec.noise > 0.0 && label_rng.uniform01() < spec.noise) y = 1.0 - y;
            ds.targets[r] = y;
        }
    }
    return ds;
}

std::uint64_t dataset_checksum(const SyntheticDataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    };
    for (double v : ds.inputs) mix(v);
    for (double v : ds.targets) mix(v);
    return h;
}

ToyModel::ToyModel(Kind kind, std::size_t features, std::size_t hidden_width, double l2)
    : kind_(kind), features_(features), hidden_(hidden_width), l2_(l2) {
    if (features_ < 1) throw ConfigError("model needs at least one feature");
    if (kind_ == Kind::Mlp && hidden_ < 1) throw ConfigError("mlp needs hidden units");
    if (!(l2_ >= 0.0)) throw ConfigError("l2 must be >= 0");
}

std::size_t ToyModel::param_count() const {
    if (kind_ == Kind::Mlp) return hidden_ * features_ + hidden_ + hidden_ + 1;
    return features_ + 1;  // weights + bias
}

ParamVector ToyModel::init_params(std::uint64_t seed) const {
    ParamVector p(param_count(), 0.0);
    if (kind_ == Kind::Mlp) {
        Rng rng = Rng::stream(seed, 999);
        const double scale = 1.0 / std::sqrt(static_cast<double>(features_));
        for (double& x : p) x = scale * rng.normal();
    }
    return p;
}

std::string ToyModel::kind_name() const {
    switch (kind_) {
        case Kind::LinearRegression: return "linear";
        case Kind::LogisticRegression: return "logistic";
        case Kind::Mlp: return "mlp";
    }
    return "linear";
}

ToyModel::Kind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ToyModel::Kind::LinearRegression;
    if (s == "logistic") return ToyModel::Kind::LogisticRegression;
    if (s == "mlp") return ToyModel::Kind::Mlp;
    throw ConfigError("unknown model kind: " + s);
}

double ToyModel::predict(const ParamVector& p, const double* x) const {
    if (kind_ != Kind::Mlp) {
        double z = 0.0;
        for (std::size_t c = 0; c < features_; ++c) z += p[c] * x[c];
        return z + p[features_];
    }
    // layout: W1 (hidden x features), b1, w2, b2
    const double* W1 = p.data();
    const double* b1 = W1 + hidden_ * features_;
    const double* w2 = b1 + hidden_;
    const double b2 = *(w2 + hidden_);
    double out = b2;
    for (std::size_t hgt = 0; hgt < hidden_; ++hgt) {
        double z = b1[hgt];
        for (std::size_t c = 0; c < features_; ++c) z += W1[hgt * features_ + c] * x[c];
        out += w2[hgt] * std::tanh(z);
    }
    return out;
}

namespace {

double pointwise_loss(bool classification, double f, double y) {
    if (!classification) {
        const double r = f - y;
        return 0.5 * r * r;
    }
    // numerically stable logistic loss on the logit f
    return std::log1p(std::exp(-std::abs(f))) + std::max(f, 0.0) - y * f;
}

// d loss / d f
double pointwise_residual(bool classification, double f, double y) {
    if (!classification) return f - y;
    return 1.0 / (1.0 + std::exp(-f)) - y;
}

}  // namespace

double ToyModel::loss(const ParamVector& params, const SyntheticDataset& ds,
                      const std::vector<std::size_t>& rows) const {
    if (params.size() != param_count()) throw DimensionError("parameter count mismatch");
    const bool cls = ds.spec.kind == DatasetSpec::Kind::Classification;
    double s = 0.0;
    for (std::size_t r : rows) s += pointwise_loss(cls, predict(params, ds.row(r)), ds.targets[r]);
    s /= static_cast<double>(rows.size());
    if (l2_ > 0.0) {
        double reg = 0.0;
        for (double w : params) reg += w * w;
        s += 0.5 * l2_ * reg;
    }
    return s;
}

double ToyModel::loss(const ParamVector& params, const SyntheticDataset& ds) const {
    std::vector<std::size_t> rows(ds.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return loss(params, ds, rows);
}

ParamVector ToyModel::gradient(const ParamVector& params, const SyntheticDataset& ds,
                               const std::vector<std::size_t>& rows) const {
    if (params.size() != param_count()) throw DimensionError("parameter count mismatch");
    const bool cls = ds.spec.kind == DatasetSpec::Kind::Classification;
    ParamVector g(params.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r : rows) {
        const double* x = ds.row(r);
        const double resid = inv * pointwise_residual(cls, predict(params, x), ds.targets[r]);
        if (kind_ != Kind::Mlp) {
            for (std::size_t c = 0; c < features_; ++c) g[c] += resid * x[c];
            g[features_] += resid;
        } else {
            const double* W1 = params.data();
            const double* b1 = W1 + hidden_ * features_;
            const double* w2 = b1 + hidden_;
            double* gW1 = g.data();
            double* gb1 = gW1 + hidden_ * features_;
            double* gw2 = gb1 + hidden_;
            double* gb2 = gw2 + hidden_;
            for (std::size_t hgt = 0; hgt < hidden_; ++hgt) {
                double z = b1[hgt];
                for (std::size_t c = 0; c < features_; ++c) z += W1[hgt * features_ + c] * x[c];
                const double t = std::tanh(z);
                gw2[hgt] += resid * t;
                const double dz = resid * w2[hgt] * (1.0 - t * t);
                gb1[hgt] += dz;
                for (std::size_t c = 0; c < features_; ++c) gW1[hgt * features_ + c] += dz * x[c];
            }
            *gb2 += resid;
        }
    }
    if (l2_ > 0.0)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += l2_ * params[i];
    return g;
}

json OptimizerSetup::to_json() const {
    json j;
    j["inner"] = json{{"kind", to_string(inner.kind)}, {"learning_rate", inner.learning_rate}};
    if (inner.kind == OptimizerKind::Momentum) j["inner"]["momentum"] = inner.momentum;
    if (inner.kind == OptimizerKind::Adam) {
        j["inner"]["adam_beta1"] = inner.beta1;
        j["inner"]["adam_beta2"] = inner.beta2;
        j["inner"]["adam_epsilon"] = inner.epsilon;
    }
    if (lookahead) {
        j["lookahead"] = json{{"k", lookahead->k},
                              {"alpha", lookahead->alpha},
                              {"momentum_mode", to_string(lookahead->mode)},
                              {"adaptive", lookahead->adaptive},
                              {"alpha_low", lookahead->alpha_low}};
    }
    return j;
}

RunRecord train(const ToyModel& model, const SyntheticDataset& train_ds,
                const SyntheticDataset* heldout, const TrainSetup& setup) {
    const auto t_start = std::chrono::steady_clock::now();
    setup.optimizer.inner.validate();
    if (setup.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (setup.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (setup.trace && heldout == nullptr)
        throw ConfigError("trace requires a held-out dataset");

    RunRecord rec;
    rec.seed = setup.seed;
    rec.config = setup.optimizer.to_json();
    rec.config["epochs"] = setup.epochs;
    rec.config["batch_size"] = setup.batch_size;
    rec.config["with_replacement"] = setup.with_replacement;
    rec.config["dataset"] = train_ds.spec.to_json();

    const bool wrapped = setup.optimizer.lookahead.has_value();
    const LookaheadSetup la = setup.optimizer.lookahead.value_or(LookaheadSetup{});

    // Plain runs keep the parameters directly; wrapped runs delegate to the
    // Lookahead state machine.
    ParamVector plain_params = model.init_params(setup.seed);
    InnerOptimizer plain_inner(setup.optimizer.inner);
    std::optional<LookaheadOptimizer> look;
    if (wrapped) {
        if (setup.resume_state)
            look = LookaheadOptimizer::from_json(*setup.resume_state);
        else
            look.emplace(plain_params, la.k, la.alpha, la.mode,
                         InnerOptimizer(setup.optimizer.inner));
    } else if (setup.resume_state) {
        throw ConfigError("resume requires a lookahead run");
    }

    FisherTracker fisher;  // adaptive alpha under SGD/momentum inner
    if (setup.resume_state && setup.resume_state->contains("fisher_tracker"))
        fisher = FisherTracker::from_json(setup.resume_state->at("fisher_tracker"));
    auto eval_params = [&]() -> const ParamVector& {
        return wrapped ? look->slow_weights() : plain_params;
    };
    auto fast_params = [&]() -> const ParamVector& {
        return wrapped ? look->fast_weights() : plain_params;
    };
    const SyntheticDataset& eval_ds = heldout ? *heldout : train_ds;

    const std::size_t n_rows = train_ds.rows();
    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> batch;
    long step = 0;

    for (int epoch = setup.start_epoch; epoch < setup.epochs && !rec.diverged; ++epoch) {
        if (std::find(setup.lr_decay_epochs.begin(), setup.lr_decay_epochs.end(), epoch) !=
            setup.lr_decay_epochs.end()) {
            if (!(setup.lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be > 0");
            if (wrapped) {
                look->set_inner_learning_rate(look->inner().config().learning_rate /
                                              setup.lr_decay_factor);
            } else {
                plain_inner.set_learning_rate(plain_inner.config().learning_rate /
                                              setup.lr_decay_factor);
            }
        }
        // the batch order is a pure function of (seed, epoch) so that runs can
        // resume at any epoch boundary
        Rng shuffle_rng = Rng::stream(setup.seed, 1000 + static_cast<std::uint64_t>(epoch));
        if (!setup.with_replacement) {
            std::iota(order.begin(), order.end(), 0);
            shuffle_rng.shuffle(order);
        }
        for (std::size_t b0 = 0; b0 < n_rows; b0 += setup.batch_size) {
            const std::size_t b1 = std::min(b0 + setup.batch_size, n_rows);
            batch.clear();
            if (setup.with_replacement) {
                for (std::size_t i = b0; i < b1; ++i)
                    batch.push_back(static_cast<std::size_t>(shuffle_rng.below(n_rows)));
            } else {
                batch.assign(order.begin() + b0, order.begin() + b1);
            }

            const double batch_loss = model.loss(fast_params(), train_ds, batch);
            rec.step_loss.push_back(batch_loss);
            if (!std::isfinite(batch_loss) || batch_loss > setup.divergence_threshold) {
                rec.diverged = true;
                break;
            }
            const ParamVector grad = model.gradient(fast_params(), train_ds, batch);
            if (!all_finite(grad)) {
                rec.diverged = true;
                break;
            }

            ++step;
            if (!wrapped) {
                plain_inner.step(plain_params, grad);
            } else {
                if (la.adaptive && setup.optimizer.inner.kind != OptimizerKind::Adam)
                    fisher.observe(grad);
                look->inner_step(grad);
                if (setup.trace && heldout)
                    rec.trace.push_back({step, "inner", model.loss(fast_params(), eval_ds)});
                if (look->outer_step_due()) {
                    double alpha_used = la.alpha;
                    if (la.adaptive) {
                        // mini-batch gradient at theta_k, reusing the batch
                        // already drawn for this step
                        const ParamVector grad_k = model.gradient(fast_params(), train_ds, batch);
                        const ParamVector f =
                            setup.optimizer.inner.kind == OptimizerKind::Adam
                                ? look->inner().fisher_diag()
                                : fisher.fisher_diag();
                        alpha_used = adaptive_alpha(*look, f, grad_k, la.alpha_low);
                    }
                    look->outer_step(alpha_used);
                    rec.outer_alphas.push_back(alpha_used);
                    if (setup.trace && heldout)
                        rec.trace.push_back({step, "outer", model.loss(eval_params(), eval_ds)});
                }
            }
        }
        if (!rec.diverged) rec.epoch_eval.push_back(model.loss(eval_params(), eval_ds));
    }

    rec.steps = step;
    rec.final_params = eval_params();
    rec.final_state = wrapped ? look->to_json() : plain_inner.to_json();
    if (wrapped && la.adaptive && !fisher.empty())
        rec.final_state["fisher_tracker"] = fisher.to_json();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rec;
}

std::vector<SweepCellResult> robustness_sweep(const ToyModel& model,
                                              const SyntheticDataset& train_ds,
                                              const SyntheticDataset* heldout,
                                              const TrainSetup& base,
                                              const std::vector<SweepCell>& cells) {
    std::vector<SweepCellResult> out(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
        const SweepCell& cell = cells[i];
        TrainSetup setup = base;
        setup.optimizer.inner.kind =
            cell.beta > 0.0 ? OptimizerKind::Momentum : OptimizerKind::Sgd;
        setup.optimizer.inner.learning_rate = cell.gamma;
        setup.optimizer.inner.momentum = cell.beta;
        if (cell.lookahead) {
            LookaheadSetup la;
            la.k = cell.k;
            la.alpha = cell.alpha;
            setup.optimizer.lookahead = la;
        } else {
            setup.optimizer.lookahead.reset();
        }
        const RunRecord rec = train(model, train_ds, heldout, setup);
        SweepCellResult res;
        res.cell = cell;
        res.diverged = rec.diverged;
        res.final_train_loss = rec.step_loss.empty() ? 0.0 : rec.step_loss.back();
        res.final_eval_loss = rec.epoch_eval.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : rec.epoch_eval.back();
        out[i] = res;
    });
    return out;
}

}  // namespace lal
