#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lal/optim.hpp"
#include "lal/param_ops.hpp"

namespace lal {

// --- Synthetic data -----------------------------------------------------------

struct DatasetSpec {
    enum class Kind { Regression, Classification };
    Kind kind = Kind::Regression;
    std::size_t features = 8;
    std::size_t count = 256;
    std::uint64_t seed = 0;
    // Teacher weights default to the data seed; a held-out split sets this to
    // the training seed so both sets share the generating model.
    std::optional<std::uint64_t> teacher_seed;
    // Regression: stddev of additive label noise. Classification: label-flip
    // probability on top of the teacher's Bernoulli draw.
    double noise = 0.0;

    nlohmann::json to_json() const;
};

struct SyntheticDataset {
    DatasetSpec spec;
    std::vector<double> inputs;   // row-major count x features
    std::vector<double> targets;  // real (regression) or {0,1} (classification)
    ParamVector teacher;          // generating weights

    std::size_t rows() const { return spec.count; }
    std::size_t cols() const { return spec.features; }
    const double* row(std::size_t r) const { return &inputs[r * spec.features]; }
};

// Deterministic: the same spec regenerates bit-identical data.
SyntheticDataset make_dataset(const DatasetSpec& spec);

// FNV-1a over the raw bit patterns of inputs and targets.
std::uint64_t dataset_checksum(const SyntheticDataset& ds);

// --- Models ---------------------------------------------------------------------

// Scalar-output models with analytic gradients. Regression pairs with squared
// error, classification with logistic loss on the output logit; an optional
// L2 penalty (plain weight decay) applies to all parameters.
class ToyModel {
  public:
    enum class Kind { LinearRegression, LogisticRegression, Mlp };

    ToyModel(Kind kind, std::size_t features, std::size_t hidden_width = 8, double l2 = 0.0);

    Kind kind() const { return kind_; }
    std::size_t param_count() const;
    ParamVector init_params(std::uint64_t seed) const;

    double loss(const ParamVector& params, const SyntheticDataset& ds,
                const std::vector<std::size_t>& rows) const;
    double loss(const ParamVector& params, const SyntheticDataset& ds) const;
    ParamVector gradient(const ParamVector& params, const SyntheticDataset& ds,
                         const std::vector<std::size_t>& rows) const;

    std::string kind_name() const;

  private:
    double predict(const ParamVector& params, const double* x) const;
    Kind kind_;
    std::size_t features_, hidden_;
    double l2_;
};

ToyModel::Kind model_kind_from_string(const std::string& s);

// --- Training --------------------------------------------------------------------

struct LookaheadSetup {
    int k = 5;
    double alpha = 0.5;
    MomentumMode mode = MomentumMode::Maintain;
    bool adaptive = false;    // recompute alpha from the Fisher proxy each outer step
    double alpha_low = 0.2;
};

struct OptimizerSetup {
    InnerConfig inner;
    std::optional<LookaheadSetup> lookahead;

    nlohmann::json to_json() const;
};

struct TrainSetup {
    OptimizerSetup optimizer;
    int epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool with_replacement = false;  // default: reshuffle without replacement per epoch
    double divergence_threshold = 1e10;
    bool trace = false;             // held-out loss after every inner and outer step
    int start_epoch = 0;            // resume support; batch order is epoch-seeded
    std::optional<nlohmann::json> resume_state;  // LookaheadOptimizer checkpoint
    // step-decay hook: at the start of each listed epoch the inner learning
    // rate is divided by lr_decay_factor
    std::vector<int> lr_decay_epochs;
    double lr_decay_factor = 5.0;
};

struct TracePoint {
    long step = 0;
    std::string phase;  // "inner" or "outer"
    double heldout_loss = 0.0;
};

struct RunRecord {
    std::vector<double> step_loss;    // batch loss at the pre-update parameters
    std::vector<double> epoch_eval;   // held-out loss per epoch (slow weights)
    std::vector<TracePoint> trace;
    std::vector<double> outer_alphas;  // alpha applied at each outer step
    bool diverged = false;
    long steps = 0;
    double wall_seconds = 0.0;
    ParamVector final_params;          // slow weights (or plain parameters)
    nlohmann::json final_state;        // optimizer checkpoint
    nlohmann::json config;
    std::uint64_t seed = 0;
};

// Runs minibatch training; (config, seed) fully determines the trajectory.
// Divergence (non-finite or loss above the threshold) stops the run and marks
// the record, leaving the partial trajectory intact.
RunRecord train(const ToyModel& model, const SyntheticDataset& train_ds,
                const SyntheticDataset* heldout, const TrainSetup& setup);

// --- Robustness sweep --------------------------------------------------------------

struct SweepCell {
    double gamma = 0.1;
    double beta = 0.0;       // inner momentum (0 = plain SGD)
    bool lookahead = false;
    int k = 5;
    double alpha = 0.5;
};

struct SweepCellResult {
    SweepCell cell;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    bool diverged = false;
};

// One summary per cell, cells evaluated independently (parallel) and returned
// in input order.
std::vector<SweepCellResult> robustness_sweep(const ToyModel& model,
                                              const SyntheticDataset& train_ds,
                                              const SyntheticDataset* heldout,
                                              const TrainSetup& base,
                                              const std::vector<SweepCell>& cells);

}  // namespace lal
