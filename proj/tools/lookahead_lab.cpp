// lookahead-lab: command-line front end for the Lookahead optimizer toolkit.
//
// Subcommands: nqm-dynamics, nqm-sweep, quad-rate, taylor-check, train,
// adaptive-alpha-demo. Each accepts --config <file.json> whose keys mirror the
// long-form flags; flags given on the command line take precedence. Every CSV
// output starts with a '#' metadata line carrying the resolved configuration
// and seed; JSON outputs embed the same object under "config".
//
// Exit codes: 0 success, 2 usage/config error, 3 numerical/stability error,
// 4 success with diverged cells.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lal/csv.hpp"
#include "lal/harness.hpp"
#include "lal/nqm.hpp"
#include "lal/optim.hpp"
#include "lal/quad_rates.hpp"
#include "lal/rng.hpp"
#include "lal/taylor.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitPartial = 4;

// Applies config-file values to options the user did not pass on the command
// line, and rejects keys that match no option.
class ConfigFile {
  public:
    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw lal::ConfigError("cannot open config file: " + path);
        try {
            in >> data_;
        } catch (const json::exception& e) {
            throw lal::ConfigError("config file is not valid JSON: " + std::string(e.what()));
        }
        if (!data_.is_object()) throw lal::ConfigError("config file must hold a JSON object");
    }

    template <typename T>
    void apply(const CLI::Option* opt, const char* key, T& value) {
        if (!data_.contains(key)) return;
        if (opt == nullptr || opt->count() == 0) {
            try {
                value = data_.at(key).get<T>();
            } catch (const json::exception&) {
                throw lal::ConfigError(std::string("config key has wrong type: ") + key);
            }
        }
        data_.erase(key);
    }

    void finish() const {
        if (data_.empty()) return;
        std::string keys;
        for (const auto& [k, v] : data_.items()) keys += k + " ";
        throw lal::ConfigError("unknown config keys: " + keys);
    }

  private:
    json data_ = json::object();
};

void check_output_path(const std::string& path) {
    const std::filesystem::path p(path);
    const auto dir = p.parent_path();
    if (!dir.empty() && !std::filesystem::is_directory(dir))
        throw lal::ConfigError("output directory does not exist: " + dir.string());
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw lal::ConfigError("not a number in list: '" + item + "'");
        }
    }
    return out;
}

std::vector<long> parse_long_list(const std::string& csv) {
    std::vector<long> out;
    for (double x : parse_list(csv)) out.push_back(static_cast<long>(x));
    return out;
}

std::string metadata_line(const std::string& subcommand, const json& resolved) {
    return subcommand + " config=" + resolved.dump();
}

lal::NoisyQuadraticModel resolve_model(const std::string& spectrum,
                                       const std::string& spectrum_file, std::size_t dim) {
    if (!spectrum_file.empty()) return lal::load_spectrum_file(spectrum_file);
    return lal::NoisyQuadraticModel::spectrum(spectrum, dim);
}

// --- nqm-dynamics -------------------------------------------------------------

struct NqmDynamicsOpts {
    double gamma = 0.0;
    double alpha = 0.5;
    int k = 1;
    long steps = 100;
    std::string spectrum = "uniform";
    std::string spectrum_file;
    std::size_t dim = 1;
    std::uint64_t seed = 0;
    std::string out;

    json resolved() const {
        return {{"gamma", gamma},   {"alpha", alpha},
                {"k", k},           {"steps", steps},
                {"spectrum", spectrum_file.empty() ? spectrum : spectrum_file},
                {"dim", dim},       {"seed", seed},
                {"out", out}};
    }
};

int run_nqm_dynamics(const NqmDynamicsOpts& o) {
    check_output_path(o.out);
    if (o.k < 1) throw lal::ConfigError("k must be >= 1");
    if (o.steps < 0) throw lal::ConfigError("steps must be >= 0");
    const lal::NoisyQuadraticModel model = resolve_model(o.spectrum, o.spectrum_file, o.dim);
    const std::size_t n = model.dim();
    const double bound = 2.0 / model.max_curvature();
    if (!(o.gamma >= 0.0 && o.gamma < bound))
        throw lal::StabilityError("gamma " + lal::format_double(o.gamma) +
                                  " violates the stability bound 2/L = " +
                                  lal::format_double(bound));

    lal::CsvWriter csv(o.out, metadata_line("nqm-dynamics", o.resolved()));
    std::vector<std::string> header{"step"};
    for (std::size_t i = 0; i < n; ++i) header.push_back("sgd_e_" + std::to_string(i));
    for (std::size_t i = 0; i < n; ++i) header.push_back("sgd_v_" + std::to_string(i));
    header.push_back("sgd_loss");
    for (std::size_t i = 0; i < n; ++i) header.push_back("la_e_" + std::to_string(i));
    for (std::size_t i = 0; i < n; ++i) header.push_back("la_v_" + std::to_string(i));
    header.push_back("la_loss");
    csv.header(header);

    lal::MomentState sgd{lal::ParamVector(n, 1.0), lal::ParamVector(n, 0.0)};
    lal::MomentState la = sgd;  // slow-weight moments, advanced at outer boundaries
    for (long t = 0; t <= o.steps; ++t) {
        if (t > 0) {
            sgd = lal::sgd_moment_step(sgd, o.gamma, model);
            if (t % o.k == 0) la = lal::lookahead_moment_step(la, o.gamma, o.alpha, o.k, model);
        }
        std::vector<std::string> row{std::to_string(t)};
        for (double e : sgd.mean) row.push_back(lal::format_double(e));
        for (double v : sgd.var) row.push_back(lal::format_double(v));
        row.push_back(lal::format_double(lal::expected_loss(sgd, model)));
        for (double e : la.mean) row.push_back(lal::format_double(e));
        for (double v : la.var) row.push_back(lal::format_double(v));
        row.push_back(lal::format_double(lal::expected_loss(la, model)));
        csv.row(row);
    }
    return kExitOk;
}

// --- nqm-sweep ----------------------------------------------------------------

struct NqmSweepOpts {
    std::string mode = "comparison";  // or "horizon"
    int gamma_points = 0;             // 0: mode default
    double gamma_min = 0.0, gamma_max = 0.0;
    int alpha_points = 0;
    int k = 5;
    long horizon = 1000;
    std::string horizons = "5,10,20,50,100,200,500,1000";
    std::string spectrum = "one_over_i";
    std::string spectrum_file;
    std::size_t dim = 100;
    std::uint64_t seed = 0;
    std::string out;
    std::string json_out;  // optional JSON copy of the same rows

    json resolved() const {
        return {{"mode", mode},
                {"gamma_points", gamma_points},
                {"gamma_min", gamma_min},
                {"gamma_max", gamma_max},
                {"alpha_points", alpha_points},
                {"k", k},
                {"horizon", horizon},
                {"horizons", horizons},
                {"spectrum", spectrum_file.empty() ? spectrum : spectrum_file},
                {"dim", dim},
                {"seed", seed},
                {"out", out},
                {"json_out", json_out}};
    }
};

int run_nqm_sweep(NqmSweepOpts o) {
    check_output_path(o.out);
    if (!o.json_out.empty()) check_output_path(o.json_out);
    if (o.mode != "comparison" && o.mode != "horizon")
        throw lal::ConfigError("mode must be 'comparison' or 'horizon'");
    const lal::NoisyQuadraticModel model = resolve_model(o.spectrum, o.spectrum_file, o.dim);

    lal::SweepGrid grid;
    grid.k = o.k;
    grid.horizon = o.horizon;
    if (o.mode == "comparison") {
        // evenly spaced gammas in (0, max) and alphas in (0, 1]
        if (o.gamma_points == 0) o.gamma_points = 100;
        if (o.alpha_points == 0) o.alpha_points = 100;
        if (o.gamma_max == 0.0) o.gamma_max = 1.0;
        grid.gammas = lal::open_linear(0.0, o.gamma_max, o.gamma_points);
        grid.alphas.resize(o.alpha_points);
        for (int i = 0; i < o.alpha_points; ++i)
            grid.alphas[i] = static_cast<double>(i + 1) / o.alpha_points;
    } else {
        // log-spaced grids
        if (o.gamma_points == 0) o.gamma_points = 100;
        if (o.alpha_points == 0) o.alpha_points = 50;
        if (o.gamma_min == 0.0) o.gamma_min = 1e-4;
        if (o.gamma_max == 0.0) o.gamma_max = 1e-1;
        grid.gammas = lal::log_spaced(o.gamma_min, o.gamma_max, o.gamma_points);
        grid.alphas = lal::log_spaced(1e-4, 1.0, o.alpha_points);
    }

    lal::CsvWriter csv(o.out, metadata_line("nqm-sweep", o.resolved()));
    csv.header({"optimizer", "gamma", "alpha", "k", "horizon", "loss", "steady_state_loss"});
    const double bound = 2.0 / model.max_curvature();
    std::size_t written = 0;
    auto progress = [&written](std::size_t total) {
        ++written;
        if (written % 5000 == 0 || written == total)
            std::cerr << "nqm-sweep: " << written << "/" << total << " rows\n";
    };
    json json_rows = json::array();
    auto record_json = [&](const std::string& optimizer, double gamma, double alpha, int k,
                           long horizon, double loss, double steady) {
        if (o.json_out.empty()) return;
        json row{{"optimizer", optimizer}, {"gamma", gamma},
                 {"horizon", horizon},     {"loss", loss},
                 {"steady_state_loss", steady}};
        if (optimizer != "sgd") {
            row["alpha"] = alpha;
            row["k"] = k;
        }
        json_rows.push_back(std::move(row));
    };

    if (o.mode == "comparison") {
        const auto rows = lal::convergence_comparison_sweep(model, grid);
        for (const auto& r : rows) {
            csv.row({r.optimizer, lal::format_double(r.gamma),
                     r.optimizer == "sgd" ? "" : lal::format_double(r.alpha),
                     r.optimizer == "sgd" ? "" : std::to_string(r.k), std::to_string(o.horizon),
                     lal::format_double(r.loss_at_horizon),
                     lal::format_double(r.steady_state_loss)});
            record_json(r.optimizer, r.gamma, r.alpha, r.k, o.horizon, r.loss_at_horizon,
                        r.steady_state_loss);
            progress(rows.size());
        }
        for (double g : grid.gammas)
            if (!(g > 0.0 && g < bound))
                csv.comment("skipped gamma=" + lal::format_double(g) +
                            " (outside stability bound 2/L=" + lal::format_double(bound) + ")");
    } else {
        const auto horizons = parse_long_list(o.horizons);
        const auto rows = lal::finite_horizon_table(model, grid, horizons);
        for (const auto& r : rows) {
            csv.row({r.optimizer, lal::format_double(r.gamma),
                     r.optimizer == "sgd" ? "" : lal::format_double(r.alpha),
                     r.optimizer == "sgd" ? "" : std::to_string(r.k), std::to_string(r.horizon),
                     lal::format_double(r.loss), lal::format_double(r.steady_state_loss)});
            record_json(r.optimizer, r.gamma, r.alpha, r.k, r.horizon, r.loss,
                        r.steady_state_loss);
            progress(rows.size());
        }
    }
    if (!o.json_out.empty()) {
        std::ofstream jout(o.json_out);
        if (!jout) throw lal::ConfigError("cannot open output file: " + o.json_out);
        jout << json{{"config", o.resolved()}, {"rows", std::move(json_rows)}}.dump() << "\n";
    }
    return kExitOk;
}

// --- quad-rate ----------------------------------------------------------------

struct QuadRateOpts {
    double kappa_min = 1.0, kappa_max = 1e4;
    int kappa_points = 13;
    double beta = 0.9;
    int k = 20;
    double alpha = 0.5;
    int eta_points = 200;
    double eta_min_frac = 1e-3;
    std::uint64_t seed = 0;
    std::string out;

    json resolved() const {
        return {{"kappa_min", kappa_min}, {"kappa_max", kappa_max},
                {"kappa_points", kappa_points}, {"beta", beta},
                {"k", k}, {"alpha", alpha}, {"eta_points", eta_points},
                {"eta_min_frac", eta_min_frac}, {"seed", seed}, {"out", out}};
    }
};

int run_quad_rate(const QuadRateOpts& o) {
    check_output_path(o.out);
    lal::RateSweepSpec spec;
    spec.kappas = o.kappa_points == 1
                      ? std::vector<double>{o.kappa_min}
                      : lal::log_spaced(o.kappa_min, o.kappa_max, o.kappa_points);
    spec.beta = o.beta;
    spec.k = o.k;
    spec.alpha = o.alpha;
    spec.eta_points = o.eta_points;
    spec.eta_min_frac = o.eta_min_frac;
    const auto rows = lal::rate_sweep(spec);

    lal::CsvWriter csv(o.out, metadata_line("quad-rate", o.resolved()));
    csv.header({"kappa", "optimizer", "eta_best", "rate"});
    for (const auto& r : rows)
        csv.row({lal::format_double(r.kappa), r.optimizer, lal::format_double(r.eta_best),
                 lal::format_double(r.rate)});
    return kExitOk;
}

// --- taylor-check ---------------------------------------------------------------

struct TaylorCheckOpts {
    std::uint64_t seed = 0;
    long samples = 20000;
    std::string out;

    json resolved() const { return {{"seed", seed}, {"samples", samples}, {"out", out}}; }
};

int run_taylor_check(const TaylorCheckOpts& o) {
    check_output_path(o.out);
    json report = lal::taylor_check_report(o.seed, o.samples);
    report["config"] = o.resolved();
    std::ofstream out(o.out);
    if (!out) throw lal::ConfigError("cannot open output file: " + o.out);
    out << report.dump(2) << "\n";
    return kExitOk;
}

// --- train ---------------------------------------------------------------------

struct TrainOpts {
    std::string model = "linear";
    std::string dataset = "regression";
    std::size_t features = 8;
    std::size_t count = 256;
    std::size_t heldout_count = 128;
    std::size_t hidden = 8;
    double l2 = 0.0;
    double noise = 0.5;
    int epochs = 20;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::string optimizer = "sgd";
    double gamma = 0.1;
    double beta = 0.9;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_epsilon = 1e-8;
    bool lookahead = false;
    int k = 5;
    double alpha = 0.5;
    std::string mode = "maintain";
    bool adaptive = false;
    double alpha_low = 0.2;
    bool with_replacement = false;
    bool trace = false;
    bool self_test = false;
    std::string lr_decay_epochs;  // comma-separated epoch indices
    double lr_decay_factor = 5.0;
    bool sweep = false;
    std::string sweep_gammas;        // empty: just --gamma
    std::string sweep_betas = "0";
    std::string sweep_ks = "5,10";
    std::string sweep_alphas = "0.5,0.8";
    std::string out;

    json resolved() const {
        json j{{"model", model},       {"dataset", dataset},
               {"features", features}, {"count", count},
               {"heldout_count", heldout_count}, {"hidden", hidden},
               {"l2", l2},             {"noise", noise},
               {"epochs", epochs},     {"batch_size", batch_size},
               {"seed", seed},         {"optimizer", optimizer},
               {"gamma", gamma},       {"beta", beta},
               {"adam_beta1", adam_beta1}, {"adam_beta2", adam_beta2},
               {"adam_epsilon", adam_epsilon},
               {"lookahead", lookahead}, {"k", k},
               {"alpha", alpha},       {"momentum_mode", mode},
               {"adaptive", adaptive}, {"alpha_low", alpha_low},
               {"with_replacement", with_replacement}, {"trace", trace},
               {"lr_decay_epochs", lr_decay_epochs}, {"lr_decay_factor", lr_decay_factor},
               {"sweep", sweep},       {"out", out}};
        if (sweep) {
            j["sweep_gammas"] = sweep_gammas;
            j["sweep_betas"] = sweep_betas;
            j["sweep_ks"] = sweep_ks;
            j["sweep_alphas"] = sweep_alphas;
        }
        return j;
    }

    lal::TrainSetup setup() const {
        lal::TrainSetup s;
        s.optimizer.inner.kind = lal::optimizer_kind_from_string(optimizer);
        s.optimizer.inner.learning_rate = gamma;
        s.optimizer.inner.momentum = beta;
        s.optimizer.inner.beta1 = adam_beta1;
        s.optimizer.inner.beta2 = adam_beta2;
        s.optimizer.inner.epsilon = adam_epsilon;
        if (lookahead) {
            lal::LookaheadSetup la;
            la.k = k;
            la.alpha = alpha;
            la.mode = lal::momentum_mode_from_string(mode);
            la.adaptive = adaptive;
            la.alpha_low = alpha_low;
            s.optimizer.lookahead = la;
        }
        s.epochs = epochs;
        s.batch_size = batch_size;
        s.seed = seed;
        s.with_replacement = with_replacement;
        s.trace = trace;
        for (long e : parse_long_list(lr_decay_epochs))
            s.lr_decay_epochs.push_back(static_cast<int>(e));
        s.lr_decay_factor = lr_decay_factor;
        return s;
    }
};

int run_train(const TrainOpts& o) {
    check_output_path(o.out + ".jsonl");
    lal::DatasetSpec train_spec;
    train_spec.kind = o.dataset == "classification" ? lal::DatasetSpec::Kind::Classification
                                                    : lal::DatasetSpec::Kind::Regression;
    train_spec.features = o.features;
    train_spec.count = o.count;
    train_spec.seed = o.seed;
    train_spec.noise = o.noise;
    lal::DatasetSpec eval_spec = train_spec;
    eval_spec.count = o.heldout_count;
    eval_spec.seed = o.seed + 1;
    eval_spec.teacher_seed = o.seed;  // held-out split shares the teacher

    const lal::SyntheticDataset train_ds = lal::make_dataset(train_spec);
    const lal::SyntheticDataset eval_ds = lal::make_dataset(eval_spec);
    const lal::ToyModel model(lal::model_kind_from_string(o.model), o.features, o.hidden, o.l2);

    if (o.self_test) {
        // Built-in alpha=1 equivalence check: the wrapped and unwrapped
        // trajectories must agree bit for bit.
        lal::TrainSetup a = o.setup();
        a.epochs = std::min(o.epochs, 3);
        a.trace = false;
        lal::TrainSetup b = a;
        lal::LookaheadSetup la;
        la.k = o.k;
        la.alpha = 1.0;
        b.optimizer.lookahead = la;
        a.optimizer.lookahead.reset();
        const auto ra = lal::train(model, train_ds, &eval_ds, a);
        const auto rb = lal::train(model, train_ds, &eval_ds, b);
        if (ra.step_loss != rb.step_loss)
            throw lal::NumericError("self-test failed: alpha=1 trajectory differs from inner");
        std::cerr << "self-test: alpha=1 equivalence ok\n";
    }

    const std::string meta = metadata_line("train", o.resolved());

    if (o.sweep) {
        std::vector<lal::SweepCell> cells;
        const auto gammas = o.sweep_gammas.empty() ? std::vector<double>{o.gamma}
                                                   : parse_list(o.sweep_gammas);
        const auto betas = parse_list(o.sweep_betas);
        const auto ks = parse_long_list(o.sweep_ks);
        const auto alphas = parse_list(o.sweep_alphas);
        for (double g : gammas)
            for (double b : betas) {
                cells.push_back({g, b, false, 0, 0.0});
                for (long kk : ks)
                    for (double al : alphas)
                        cells.push_back({g, b, true, static_cast<int>(kk), al});
            }
        const auto results =
            lal::robustness_sweep(model, train_ds, &eval_ds, o.setup(), cells);
        lal::CsvWriter csv(o.out + "_sweep.csv", meta);
        csv.header({"optimizer", "gamma", "beta", "k", "alpha", "final_train_loss",
                    "final_eval_loss", "diverged"});
        bool any_diverged = false;
        for (const auto& r : results) {
            any_diverged |= r.diverged;
            csv.row({r.cell.lookahead ? "lookahead" : "inner", lal::format_double(r.cell.gamma),
                     lal::format_double(r.cell.beta),
                     r.cell.lookahead ? std::to_string(r.cell.k) : "",
                     r.cell.lookahead ? lal::format_double(r.cell.alpha) : "",
                     lal::format_double(r.final_train_loss),
                     lal::format_double(r.final_eval_loss), r.diverged ? "1" : "0"});
        }
        return any_diverged ? kExitPartial : kExitOk;
    }

    const lal::RunRecord rec = lal::train(model, train_ds, &eval_ds, o.setup());

    std::ofstream jsonl(o.out + ".jsonl");
    if (!jsonl) throw lal::ConfigError("cannot open output file: " + o.out + ".jsonl");
    jsonl << "# " << meta << "\n";
    for (std::size_t i = 0; i < rec.step_loss.size(); ++i)
        jsonl << json{{"step", i + 1}, {"train_loss", rec.step_loss[i]}}.dump() << "\n";
    for (std::size_t e = 0; e < rec.epoch_eval.size(); ++e)
        jsonl << json{{"epoch", e + 1}, {"eval_loss", rec.epoch_eval[e]}}.dump() << "\n";
    for (const auto& t : rec.trace)
        jsonl << json{{"step", t.step}, {"phase", t.phase}, {"eval_loss", t.heldout_loss}}.dump()
              << "\n";

    lal::CsvWriter csv(o.out + "_summary.csv", meta);
    csv.header({"steps", "final_train_loss", "final_eval_loss", "diverged"});
    csv.row({std::to_string(rec.steps),
             lal::format_double(rec.step_loss.empty() ? 0.0 : rec.step_loss.back()),
             lal::format_double(rec.epoch_eval.empty()
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : rec.epoch_eval.back()),
             rec.diverged ? "1" : "0"});
    return rec.diverged ? kExitPartial : kExitOk;
}

// --- adaptive-alpha-demo ---------------------------------------------------------

struct AdaptiveDemoOpts {
    std::string problem = "quadratic";  // or "regression"
    std::size_t dim = 10;
    long outer_steps = 100;
    int epochs = 20;
    int k = 5;
    double gamma = 0.1;
    double alpha = 0.5;      // fixed baseline
    double alpha_low = 0.2;
    std::uint64_t seed = 0;
    std::string out;

    json resolved() const {
        return {{"problem", problem}, {"dim", dim},   {"outer_steps", outer_steps},
                {"epochs", epochs},   {"k", k},       {"gamma", gamma},
                {"alpha", alpha},     {"alpha_low", alpha_low},
                {"seed", seed},       {"out", out}};
    }
};

int run_adaptive_demo(const AdaptiveDemoOpts& o) {
    check_output_path(o.out);
    const std::string meta = metadata_line("adaptive-alpha-demo", o.resolved());

    if (o.problem == "quadratic") {
        lal::Rng rng(o.seed);
        lal::QuadraticProblem prob;
        prob.a.resize(o.dim);
        prob.b.resize(o.dim);
        lal::ParamVector x0(o.dim);
        for (std::size_t i = 0; i < o.dim; ++i) {
            prob.a[i] = 0.1 + 1.9 * rng.uniform01();
            prob.b[i] = rng.normal();
            x0[i] = 2.0 * rng.normal();
        }
        lal::InnerConfig inner;
        inner.kind = lal::OptimizerKind::Sgd;
        inner.learning_rate = o.gamma;

        lal::LookaheadOptimizer fixed(x0, o.k, o.alpha, lal::MomentumMode::Maintain,
                                      lal::InnerOptimizer(inner));
        lal::LookaheadOptimizer adaptive = fixed;

        lal::CsvWriter csv(o.out, meta);
        csv.header({"outer_step", "fixed_loss", "adaptive_loss", "alpha_hat",
                    "alpha_star_clipped"});
        for (long t = 1; t <= o.outer_steps; ++t) {
            for (int j = 0; j < o.k; ++j) fixed.inner_step(prob.grad(fixed.fast_weights()));
            fixed.outer_step();
            for (int j = 0; j < o.k; ++j)
                adaptive.inner_step(prob.grad(adaptive.fast_weights()));
            // exact curvature and exact gradient: alpha_hat equals clip(alpha*)
            const double alpha_hat =
                lal::adaptive_alpha(adaptive, prob.a, prob.grad(adaptive.fast_weights()),
                                    o.alpha_low);
            double star_clipped = alpha_hat;
            try {
                star_clipped = std::clamp(lal::exact_alpha_star(prob, adaptive.slow_weights(),
                                                                adaptive.fast_weights()),
                                          o.alpha_low, 1.0);
            } catch (const lal::DegenerateDirectionError&) {
            }
            adaptive.outer_step(alpha_hat);
            csv.row({std::to_string(t), lal::format_double(prob.loss(fixed.slow_weights())),
                     lal::format_double(prob.loss(adaptive.slow_weights())),
                     lal::format_double(alpha_hat), lal::format_double(star_clipped)});
        }
        return kExitOk;
    }
    if (o.problem != "regression") throw lal::ConfigError("problem must be quadratic|regression");

    lal::DatasetSpec spec;
    spec.kind = lal::DatasetSpec::Kind::Regression;
    spec.features = o.dim;
    spec.count = 256;
    spec.seed = o.seed;
    spec.noise = 0.5;
    lal::DatasetSpec eval_spec = spec;
    eval_spec.count = 128;
    eval_spec.seed = o.seed + 1;
    eval_spec.teacher_seed = o.seed;
    const auto train_ds = lal::make_dataset(spec);
    const auto eval_ds = lal::make_dataset(eval_spec);
    const lal::ToyModel model(lal::ToyModel::Kind::LinearRegression, o.dim);

    lal::TrainSetup base;
    base.optimizer.inner.kind = lal::OptimizerKind::Sgd;
    base.optimizer.inner.learning_rate = o.gamma;
    base.epochs = o.epochs;
    base.seed = o.seed;
    base.trace = true;
    lal::LookaheadSetup la;
    la.k = o.k;
    la.alpha = o.alpha;
    la.alpha_low = o.alpha_low;

    lal::TrainSetup fixed_setup = base;
    la.adaptive = false;
    fixed_setup.optimizer.lookahead = la;
    lal::TrainSetup adapt_setup = base;
    la.adaptive = true;
    adapt_setup.optimizer.lookahead = la;

    const auto fixed_rec = lal::train(model, train_ds, &eval_ds, fixed_setup);
    const auto adapt_rec = lal::train(model, train_ds, &eval_ds, adapt_setup);

    auto outer_losses = [](const lal::RunRecord& r) {
        std::vector<double> ls;
        for (const auto& t : r.trace)
            if (t.phase == "outer") ls.push_back(t.heldout_loss);
        return ls;
    };
    const auto fl = outer_losses(fixed_rec);
    const auto al = outer_losses(adapt_rec);

    lal::CsvWriter csv(o.out, meta);
    csv.header({"outer_step", "fixed_eval_loss", "adaptive_eval_loss", "alpha_hat"});
    const std::size_t rows = std::min({fl.size(), al.size(), adapt_rec.outer_alphas.size()});
    for (std::size_t t = 0; t < rows; ++t)
        csv.row({std::to_string(t + 1), lal::format_double(fl[t]), lal::format_double(al[t]),
                 lal::format_double(adapt_rec.outer_alphas[t])});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lookahead-lab: Lookahead optimizer analysis toolkit"};
    app.require_subcommand(1);

    std::string config_path;

    NqmDynamicsOpts nd;
    CLI::App* nqm_dyn = app.add_subcommand(
        "nqm-dynamics", "Exact moment dynamics of SGD and Lookahead on the noisy quadratic");
    auto* nd_cfg = nqm_dyn->add_option("--config", config_path, "JSON config file");
    auto* nd_gamma = nqm_dyn->add_option("--gamma", nd.gamma, "learning rate (required)");
    auto* nd_alpha = nqm_dyn->add_option("--alpha", nd.alpha, "slow-weights step size");
    auto* nd_k = nqm_dyn->add_option("--k", nd.k, "inner steps per outer step");
    auto* nd_steps = nqm_dyn->add_option("--steps", nd.steps, "inner steps to unroll");
    auto* nd_spec = nqm_dyn->add_option("--spectrum", nd.spectrum, "uniform|one_over_i|one_over_i2");
    auto* nd_specf = nqm_dyn->add_option("--spectrum-file", nd.spectrum_file,
                                         "eigenvalues, one per line");
    auto* nd_dim = nqm_dyn->add_option("--dim", nd.dim, "model dimension");
    auto* nd_seed = nqm_dyn->add_option("--seed", nd.seed, "master seed (metadata only)");
    auto* nd_out = nqm_dyn->add_option("--out", nd.out, "output CSV path");

    NqmSweepOpts ns;
    CLI::App* nqm_sweep = app.add_subcommand("nqm-sweep",
                                             "Steady-state/finite-horizon sweeps on the NQM");
    auto* ns_cfg = nqm_sweep->add_option("--config", config_path, "JSON config file");
    auto* ns_mode = nqm_sweep->add_option("--mode", ns.mode, "comparison|horizon");
    auto* ns_gp = nqm_sweep->add_option("--gamma-points", ns.gamma_points, "learning-rate grid size");
    auto* ns_gmin = nqm_sweep->add_option("--gamma-min", ns.gamma_min, "grid lower end");
    auto* ns_gmax = nqm_sweep->add_option("--gamma-max", ns.gamma_max, "grid upper end");
    auto* ns_ap = nqm_sweep->add_option("--alpha-points", ns.alpha_points, "alpha grid size");
    auto* ns_k = nqm_sweep->add_option("--k", ns.k, "inner steps per outer step");
    auto* ns_h = nqm_sweep->add_option("--horizon", ns.horizon, "total inner steps");
    auto* ns_hs = nqm_sweep->add_option("--horizons", ns.horizons,
                                        "comma-separated horizons (horizon mode)");
    auto* ns_spec = nqm_sweep->add_option("--spectrum", ns.spectrum, "named spectrum");
    auto* ns_specf = nqm_sweep->add_option("--spectrum-file", ns.spectrum_file, "spectrum file");
    auto* ns_dim = nqm_sweep->add_option("--dim", ns.dim, "model dimension");
    auto* ns_seed = nqm_sweep->add_option("--seed", ns.seed, "master seed (metadata only)");
    auto* ns_out = nqm_sweep->add_option("--out", ns.out, "output CSV path");
    auto* ns_jout = nqm_sweep->add_option("--json-out", ns.json_out, "optional JSON output path");

    QuadRateOpts qr;
    CLI::App* quad_rate = app.add_subcommand(
        "quad-rate", "Convergence rates of CM vs Lookahead-CM over condition numbers");
    auto* qr_cfg = quad_rate->add_option("--config", config_path, "JSON config file");
    auto* qr_kmin = quad_rate->add_option("--kappa-min", qr.kappa_min, "smallest condition number");
    auto* qr_kmax = quad_rate->add_option("--kappa-max", qr.kappa_max, "largest condition number");
    auto* qr_kp = quad_rate->add_option("--kappa-points", qr.kappa_points, "grid size");
    auto* qr_beta = quad_rate->add_option("--beta", qr.beta, "fixed CM momentum");
    auto* qr_k = quad_rate->add_option("--k", qr.k, "inner steps per outer step");
    auto* qr_alpha = quad_rate->add_option("--alpha", qr.alpha, "slow-weights step size");
    auto* qr_ep = quad_rate->add_option("--eta-points", qr.eta_points, "learning-rate grid size");
    auto* qr_ef = quad_rate->add_option("--eta-min-frac", qr.eta_min_frac,
                                        "grid lower end as fraction of 2(1+beta)");
    auto* qr_seed = quad_rate->add_option("--seed", qr.seed, "master seed (metadata only)");
    auto* qr_out = quad_rate->add_option("--out", qr.out, "output CSV path");

    TaylorCheckOpts tc;
    CLI::App* taylor = app.add_subcommand("taylor-check",
                                          "Second-order expansion checks for the meta objective");
    auto* tc_cfg = taylor->add_option("--config", config_path, "JSON config file");
    auto* tc_seed = taylor->add_option("--seed", tc.seed, "master seed");
    auto* tc_samples = taylor->add_option("--samples", tc.samples, "tasks sampled for the checks");
    auto* tc_out = taylor->add_option("--out", tc.out, "output JSON path");

    TrainOpts tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Toy training runs and robustness sweeps");
    auto* tr_cfg = train_cmd->add_option("--config", config_path, "JSON config file");
    auto* tr_model = train_cmd->add_option("--model", tr.model, "linear|logistic|mlp");
    auto* tr_ds = train_cmd->add_option("--dataset", tr.dataset, "regression|classification");
    auto* tr_feat = train_cmd->add_option("--features", tr.features, "input dimension");
    auto* tr_count = train_cmd->add_option("--count", tr.count, "training examples");
    auto* tr_hcount = train_cmd->add_option("--heldout-count", tr.heldout_count, "eval examples");
    auto* tr_hidden = train_cmd->add_option("--hidden", tr.hidden, "MLP hidden width");
    auto* tr_l2 = train_cmd->add_option("--l2", tr.l2, "L2 penalty");
    auto* tr_noise = train_cmd->add_option("--noise", tr.noise, "label noise");
    auto* tr_epochs = train_cmd->add_option("--epochs", tr.epochs, "training epochs");
    auto* tr_bs = train_cmd->add_option("--batch-size", tr.batch_size, "minibatch size");
    auto* tr_seed = train_cmd->add_option("--seed", tr.seed, "master seed");
    auto* tr_opt = train_cmd->add_option("--optimizer", tr.optimizer, "sgd|momentum|adam");
    auto* tr_gamma = train_cmd->add_option("--gamma", tr.gamma, "inner learning rate");
    auto* tr_beta = train_cmd->add_option("--beta", tr.beta, "inner momentum");
    auto* tr_ab1 = train_cmd->add_option("--adam-beta1", tr.adam_beta1, "Adam beta1");
    auto* tr_ab2 = train_cmd->add_option("--adam-beta2", tr.adam_beta2, "Adam beta2");
    auto* tr_aeps = train_cmd->add_option("--adam-epsilon", tr.adam_epsilon, "Adam epsilon");
    auto* tr_la = train_cmd->add_flag("--lookahead", tr.lookahead, "wrap the inner optimizer");
    auto* tr_k = train_cmd->add_option("--k", tr.k, "inner steps per outer step");
    auto* tr_alpha = train_cmd->add_option("--alpha", tr.alpha, "slow-weights step size");
    auto* tr_mode = train_cmd->add_option("--mode", tr.mode, "maintain|interpolate|reset");
    auto* tr_adapt = train_cmd->add_flag("--adaptive", tr.adaptive, "adaptive alpha");
    auto* tr_alow = train_cmd->add_option("--alpha-low", tr.alpha_low, "adaptive clip floor");
    auto* tr_wr = train_cmd->add_flag("--with-replacement", tr.with_replacement,
                                      "sample batches with replacement");
    auto* tr_lde = train_cmd->add_option("--lr-decay-epochs", tr.lr_decay_epochs,
                                         "epochs at which to divide the learning rate");
    auto* tr_ldf = train_cmd->add_option("--lr-decay-factor", tr.lr_decay_factor,
                                         "step-decay divisor");
    auto* tr_trace = train_cmd->add_flag("--trace", tr.trace, "held-out loss per inner/outer step");
    auto* tr_st = train_cmd->add_flag("--self-test", tr.self_test,
                                      "verify alpha=1 equivalence before running");
    auto* tr_sweep = train_cmd->add_flag("--sweep", tr.sweep, "robustness sweep over the grids");
    auto* tr_sg = train_cmd->add_option("--sweep-gammas", tr.sweep_gammas, "comma-separated");
    auto* tr_sb = train_cmd->add_option("--sweep-betas", tr.sweep_betas, "comma-separated");
    auto* tr_sk = train_cmd->add_option("--sweep-ks", tr.sweep_ks, "comma-separated");
    auto* tr_sa = train_cmd->add_option("--sweep-alphas", tr.sweep_alphas, "comma-separated");
    auto* tr_out = train_cmd->add_option("--out", tr.out, "output path prefix");

    AdaptiveDemoOpts ad;
    CLI::App* demo = app.add_subcommand("adaptive-alpha-demo",
                                        "Fixed vs adaptive slow-weights step size");
    auto* ad_cfg = demo->add_option("--config", config_path, "JSON config file");
    auto* ad_prob = demo->add_option("--problem", ad.problem, "quadratic|regression");
    auto* ad_dim = demo->add_option("--dim", ad.dim, "problem dimension");
    auto* ad_os = demo->add_option("--outer-steps", ad.outer_steps, "outer steps (quadratic)");
    auto* ad_ep = demo->add_option("--epochs", ad.epochs, "epochs (regression)");
    auto* ad_k = demo->add_option("--k", ad.k, "inner steps per outer step");
    auto* ad_gamma = demo->add_option("--gamma", ad.gamma, "inner learning rate");
    auto* ad_alpha = demo->add_option("--alpha", ad.alpha, "fixed baseline alpha");
    auto* ad_alow = demo->add_option("--alpha-low", ad.alpha_low, "adaptive clip floor");
    auto* ad_seed = demo->add_option("--seed", ad.seed, "master seed");
    auto* ad_out = demo->add_option("--out", ad.out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        ConfigFile cfg;
        if (!config_path.empty()) cfg.load(config_path);

        if (nqm_dyn->parsed()) {
            cfg.apply(nd_gamma, "gamma", nd.gamma);
            cfg.apply(nd_alpha, "alpha", nd.alpha);
            cfg.apply(nd_k, "k", nd.k);
            cfg.apply(nd_steps, "steps", nd.steps);
            cfg.apply(nd_spec, "spectrum", nd.spectrum);
            cfg.apply(nd_specf, "spectrum_file", nd.spectrum_file);
            cfg.apply(nd_dim, "dim", nd.dim);
            cfg.apply(nd_seed, "seed", nd.seed);
            cfg.apply(nd_out, "out", nd.out);
            cfg.finish();
            if (nd_gamma->count() == 0 && nd.gamma == 0.0)
                throw lal::ConfigError("--gamma is required");
            if (nd.out.empty()) throw lal::ConfigError("--out is required");
            (void)nd_cfg;
            return run_nqm_dynamics(nd);
        }
        if (nqm_sweep->parsed()) {
            cfg.apply(ns_mode, "mode", ns.mode);
            cfg.apply(ns_gp, "gamma_points", ns.gamma_points);
            cfg.apply(ns_gmin, "gamma_min", ns.gamma_min);
            cfg.apply(ns_gmax, "gamma_max", ns.gamma_max);
            cfg.apply(ns_ap, "alpha_points", ns.alpha_points);
            cfg.apply(ns_k, "k", ns.k);
            cfg.apply(ns_h, "horizon", ns.horizon);
            cfg.apply(ns_hs, "horizons", ns.horizons);
            cfg.apply(ns_spec, "spectrum", ns.spectrum);
            cfg.apply(ns_specf, "spectrum_file", ns.spectrum_file);
            cfg.apply(ns_dim, "dim", ns.dim);
            cfg.apply(ns_seed, "seed", ns.seed);
            cfg.apply(ns_out, "out", ns.out);
            cfg.apply(ns_jout, "json_out", ns.json_out);
            cfg.finish();
            if (ns.out.empty()) throw lal::ConfigError("--out is required");
            (void)ns_cfg;
            return run_nqm_sweep(ns);
        }
        if (quad_rate->parsed()) {
            cfg.apply(qr_kmin, "kappa_min", qr.kappa_min);
            cfg.apply(qr_kmax, "kappa_max", qr.kappa_max);
            cfg.apply(qr_kp, "kappa_points", qr.kappa_points);
            cfg.apply(qr_beta, "beta", qr.beta);
            cfg.apply(qr_k, "k", qr.k);
            cfg.apply(qr_alpha, "alpha", qr.alpha);
            cfg.apply(qr_ep, "eta_points", qr.eta_points);
            cfg.apply(qr_ef, "eta_min_frac", qr.eta_min_frac);
            cfg.apply(qr_seed, "seed", qr.seed);
            cfg.apply(qr_out, "out", qr.out);
            cfg.finish();
            if (qr.out.empty()) throw lal::ConfigError("--out is required");
            (void)qr_cfg;
            return run_quad_rate(qr);
        }
        if (taylor->parsed()) {
            cfg.apply(tc_seed, "seed", tc.seed);
            cfg.apply(tc_samples, "samples", tc.samples);
            cfg.apply(tc_out, "out", tc.out);
            cfg.finish();
            if (tc.out.empty()) throw lal::ConfigError("--out is required");
            (void)tc_cfg;
            return run_taylor_check(tc);
        }
        if (train_cmd->parsed()) {
            cfg.apply(tr_model, "model", tr.model);
            cfg.apply(tr_ds, "dataset", tr.dataset);
            cfg.apply(tr_feat, "features", tr.features);
            cfg.apply(tr_count, "count", tr.count);
            cfg.apply(tr_hcount, "heldout_count", tr.heldout_count);
            cfg.apply(tr_hidden, "hidden", tr.hidden);
            cfg.apply(tr_l2, "l2", tr.l2);
            cfg.apply(tr_noise, "noise", tr.noise);
            cfg.apply(tr_epochs, "epochs", tr.epochs);
            cfg.apply(tr_bs, "batch_size", tr.batch_size);
            cfg.apply(tr_seed, "seed", tr.seed);
            cfg.apply(tr_opt, "optimizer", tr.optimizer);
            cfg.apply(tr_gamma, "gamma", tr.gamma);
            cfg.apply(tr_beta, "beta", tr.beta);
            cfg.apply(tr_ab1, "adam_beta1", tr.adam_beta1);
            cfg.apply(tr_ab2, "adam_beta2", tr.adam_beta2);
            cfg.apply(tr_aeps, "adam_epsilon", tr.adam_epsilon);
            cfg.apply(tr_la, "lookahead", tr.lookahead);
            cfg.apply(tr_k, "k", tr.k);
            cfg.apply(tr_alpha, "alpha", tr.alpha);
            cfg.apply(tr_mode, "momentum_mode", tr.mode);
            cfg.apply(tr_adapt, "adaptive", tr.adaptive);
            cfg.apply(tr_alow, "alpha_low", tr.alpha_low);
            cfg.apply(tr_wr, "with_replacement", tr.with_replacement);
            cfg.apply(tr_lde, "lr_decay_epochs", tr.lr_decay_epochs);
            cfg.apply(tr_ldf, "lr_decay_factor", tr.lr_decay_factor);
            cfg.apply(tr_trace, "trace", tr.trace);
            cfg.apply(tr_st, "self_test", tr.self_test);
            cfg.apply(tr_sweep, "sweep", tr.sweep);
            cfg.apply(tr_sg, "sweep_gammas", tr.sweep_gammas);
            cfg.apply(tr_sb, "sweep_betas", tr.sweep_betas);
            cfg.apply(tr_sk, "sweep_ks", tr.sweep_ks);
            cfg.apply(tr_sa, "sweep_alphas", tr.sweep_alphas);
            cfg.apply(tr_out, "out", tr.out);
            cfg.finish();
            if (tr.out.empty()) throw lal::ConfigError("--out is required");
            (void)tr_cfg;
            return run_train(tr);
        }
        if (demo->parsed()) {
            cfg.apply(ad_prob, "problem", ad.problem);
            cfg.apply(ad_dim, "dim", ad.dim);
            cfg.apply(ad_os, "outer_steps", ad.outer_steps);
            cfg.apply(ad_ep, "epochs", ad.epochs);
            cfg.apply(ad_k, "k", ad.k);
            cfg.apply(ad_gamma, "gamma", ad.gamma);
            cfg.apply(ad_alpha, "alpha", ad.alpha);
            cfg.apply(ad_alow, "alpha_low", ad.alpha_low);
            cfg.apply(ad_seed, "seed", ad.seed);
            cfg.apply(ad_out, "out", ad.out);
            cfg.finish();
            if (ad.out.empty()) throw lal::ConfigError("--out is required");
            (void)ad_cfg;
            return run_adaptive_demo(ad);
        }
    } catch (const lal::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const lal::StabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const lal::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}
