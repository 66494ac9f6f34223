#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = LAL_CLI_PATH;
const fs::path kTmp = LAL_TEST_TMP;

int run(const std::string& args) {
    const std::string cmd = kBin + " " + args + " >" + (kTmp / "stdout.txt").string() + " 2>" +
                            (kTmp / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    REQUIRE(false);
    return 0;
}

struct TmpDir {
    TmpDir() { fs::create_directories(kTmp); }
} tmp_dir_guard;

}  // namespace

TEST_CASE("nqm-dynamics default scalar run reproduces the hand-derived moments") {
    const fs::path out = kTmp / "dyn.csv";
    REQUIRE(run("nqm-dynamics --gamma 0.5 --steps 5 --out " + out.string()) == 0);

    const std::string text = slurp(out);
    CHECK(text.rfind("# nqm-dynamics", 0) == 0);  // metadata line first

    const auto rows = read_csv(out);
    const auto& header = rows[0];
    const auto t1 = rows[2];  // header, t=0, t=1
    CHECK(t1[column_index(header, "step")] == "1");
    CHECK(t1[column_index(header, "sgd_e_0")] == "0.5");
    CHECK(t1[column_index(header, "sgd_v_0")] == "0.25");
    CHECK(t1[column_index(header, "la_e_0")] == "0.75");
    CHECK(t1[column_index(header, "la_v_0")] == "0.0625");
}

TEST_CASE("nqm-dynamics alpha=1 collapses the lookahead columns onto sgd") {
    const fs::path out = kTmp / "dyn_a1.csv";
    REQUIRE(run("nqm-dynamics --gamma 0.3 --alpha 1 --steps 20 --out " + out.string()) == 0);
    const auto rows = read_csv(out);
    const auto& header = rows[0];
    const auto e_sgd = column_index(header, "sgd_e_0");
    const auto v_sgd = column_index(header, "sgd_v_0");
    const auto e_la = column_index(header, "la_e_0");
    const auto v_la = column_index(header, "la_v_0");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        CHECK(rows[r][e_sgd] == rows[r][e_la]);
        CHECK(rows[r][v_sgd] == rows[r][v_la]);
    }
}

TEST_CASE("nqm-dynamics usage and stability errors") {
    CHECK(run("nqm-dynamics --out " + (kTmp / "x.csv").string()) == 2);
    CHECK(run("nqm-dynamics --gamma 0.5 --bogus 1 --out " + (kTmp / "x.csv").string()) == 2);
    CHECK(run("nqm-dynamics --gamma 2.5 --out " + (kTmp / "x.csv").string()) == 3);
    // the stability message names the bound
    CHECK(slurp(kTmp / "stderr.txt").find("2/L") != std::string::npos);
    // unknown output directory is a config error
    CHECK(run("nqm-dynamics --gamma 0.5 --out /no/such/dir/x.csv") == 2);
}

TEST_CASE("reruns with the same config produce byte-identical files") {
    const fs::path a = kTmp / "rerun_a.csv";
    const fs::path b = kTmp / "rerun_b.csv";
    const std::string args =
        "nqm-sweep --mode horizon --gamma-points 4 --alpha-points 3 --dim 5 --horizon 50 "
        "--horizons 5,25,50 --seed 3 --out ";
    REQUIRE(run(args + a.string()) == 0);
    REQUIRE(run(args + b.string()) == 0);
    const std::string ta = slurp(a);
    CHECK(!ta.empty());
    std::string tb = slurp(b);
    // the resolved config embeds the output path; normalize it away
    size_t pos;
    while ((pos = tb.find("rerun_b")) != std::string::npos) tb.replace(pos, 7, "rerun_a");
    CHECK(ta == tb);
}

TEST_CASE("config file supplies defaults and flags override it") {
    const fs::path cfg = kTmp / "cfg.json";
    {
        std::ofstream out(cfg);
        out << R"({"gamma": 0.5, "alpha": 0.25, "steps": 3})";
    }
    const fs::path out1 = kTmp / "cfg_run1.csv";
    REQUIRE(run("nqm-dynamics --config " + cfg.string() + " --out " + out1.string()) == 0);
    CHECK(slurp(out1).find("\"alpha\":0.25") != std::string::npos);

    const fs::path out2 = kTmp / "cfg_run2.csv";
    REQUIRE(run("nqm-dynamics --config " + cfg.string() + " --alpha 0.75 --out " +
                out2.string()) == 0);
    CHECK(slurp(out2).find("\"alpha\":0.75") != std::string::npos);

    const fs::path bad = kTmp / "bad.json";
    {
        std::ofstream out(bad);
        out << R"({"gamma": 0.5, "not_a_key": 1})";
    }
    CHECK(run("nqm-dynamics --config " + bad.string() + " --out " + out1.string()) == 2);

    // boolean flags can come from the config file too
    const fs::path tcfg = kTmp / "train_cfg.json";
    {
        std::ofstream out(tcfg);
        out << R"({"lookahead": true, "k": 4, "epochs": 2, "count": 64, "heldout_count": 32})";
    }
    const fs::path tout = kTmp / "cfg_train";
    REQUIRE(run("train --config " + tcfg.string() + " --out " + tout.string()) == 0);
    const std::string meta = slurp(kTmp / "cfg_train.jsonl").substr(0, 400);
    CHECK(meta.find("\"lookahead\":true") != std::string::npos);
    CHECK(meta.find("\"k\":4") != std::string::npos);
}

TEST_CASE("nqm-sweep horizon table row accounting and json mirror") {
    const fs::path out = kTmp / "sweep.csv";
    const fs::path jout = kTmp / "sweep.json";
    REQUIRE(run("nqm-sweep --mode horizon --gamma-points 4 --alpha-points 3 --dim 5 "
                "--horizon 50 --horizons 10,50 --json-out " +
                jout.string() + " --out " + out.string()) == 0);
    const auto rows = read_csv(out);
    CHECK(rows.size() - 1 == 4 * (1 + 3) * 2);  // gammas x (sgd + alphas) x horizons
    const json mirror = json::parse(slurp(jout));
    CHECK(mirror.at("rows").size() == rows.size() - 1);
    CHECK(mirror.contains("config"));
}

TEST_CASE("nqm-sweep comparison mode default-sized header and schema") {
    const fs::path out = kTmp / "cmp.csv";
    REQUIRE(run("nqm-sweep --mode comparison --gamma-points 5 --alpha-points 4 --dim 8 "
                "--horizon 100 --out " +
                out.string()) == 0);
    const auto rows = read_csv(out);
    REQUIRE(!rows.empty());
    const std::vector<std::string> want{"optimizer", "gamma",           "alpha", "k",
                                        "horizon",   "loss",            "steady_state_loss"};
    CHECK(rows[0] == want);
    CHECK(rows.size() - 1 == 5 * (1 + 4));
}

TEST_CASE("quad-rate defaults and the well-conditioned momentum-free limit") {
    const fs::path out = kTmp / "rate.csv";
    REQUIRE(run("quad-rate --kappa-min 1 --kappa-max 1 --kappa-points 1 --beta 0 "
                "--eta-points 2000 --out " +
                out.string()) == 0);
    const auto rows = read_csv(out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"kappa", "optimizer", "eta_best", "rate"});
    CHECK(rows[1][1] == "cm");
    CHECK(std::stod(rows[1][3]) < 0.01);
    CHECK(rows[2][1] == "lookahead");
    CHECK(std::stod(rows[2][3]) < 1.0);

    // defaults recorded in the metadata: k=20, alpha=0.5, beta=0.9
    const fs::path out2 = kTmp / "rate_defaults.csv";
    REQUIRE(run("quad-rate --kappa-points 2 --eta-points 40 --out " + out2.string()) == 0);
    const std::string meta = slurp(out2).substr(0, 200);
    CHECK(meta.find("\"k\":20") != std::string::npos);
    CHECK(meta.find("\"alpha\":0.5") != std::string::npos);
    CHECK(meta.find("\"beta\":0.9") != std::string::npos);
}

TEST_CASE("taylor-check writes the report with the expected fields") {
    const fs::path out = kTmp / "taylor.json";
    REQUIRE(run("taylor-check --seed 5 --samples 4000 --out " + out.string()) == 0);
    const json report = json::parse(slurp(out));
    CHECK(report.at("quadratic_max_error").get<double>() < 1e-10);
    CHECK(report.at("ratios_in_range").get<bool>());
    CHECK(report.at("identity_pass").get<bool>());
    CHECK(report.contains("config"));
}

TEST_CASE("train writes records, honours self-test, and flags divergence") {
    const fs::path out = kTmp / "train";
    REQUIRE(run("train --epochs 3 --count 64 --heldout-count 32 --gamma 0.05 --lookahead "
                "--self-test --out " +
                out.string()) == 0);
    CHECK(fs::exists(kTmp / "train.jsonl"));
    CHECK(fs::exists(kTmp / "train_summary.csv"));
    const std::string jsonl = slurp(kTmp / "train.jsonl");
    CHECK(jsonl.rfind("# train", 0) == 0);
    CHECK(jsonl.find("train_loss") != std::string::npos);

    // a sweep with an absurd learning rate has diverged cells: exit 4
    const int code = run("train --epochs 3 --count 64 --heldout-count 32 --sweep "
                         "--sweep-gammas 0.05,50 --sweep-ks 5 --sweep-alphas 0.5 --out " +
                         (kTmp / "sw").string());
    CHECK(code == 4);
    const auto rows = read_csv(kTmp / "sw_sweep.csv");
    bool any_diverged = false;
    for (std::size_t r = 1; r < rows.size(); ++r) any_diverged |= rows[r].back() == "1";
    CHECK(any_diverged);
}

TEST_CASE("train trace emits inner and outer phases") {
    const fs::path out = kTmp / "trace";
    REQUIRE(run("train --epochs 2 --count 64 --heldout-count 32 --gamma 0.05 --lookahead --k 4 "
                "--trace --out " +
                out.string()) == 0);
    const std::string jsonl = slurp(kTmp / "trace.jsonl");
    CHECK(jsonl.find("\"phase\":\"inner\"") != std::string::npos);
    CHECK(jsonl.find("\"phase\":\"outer\"") != std::string::npos);
}

TEST_CASE("adaptive-alpha-demo quadratic mode matches clipped alpha*") {
    const fs::path out = kTmp / "demo.csv";
    REQUIRE(run("adaptive-alpha-demo --problem quadratic --outer-steps 30 --alpha-low 0.2 "
                "--out " +
                out.string()) == 0);
    const auto rows = read_csv(out);
    const auto& header = rows[0];
    const auto hat = column_index(header, "alpha_hat");
    const auto star = column_index(header, "alpha_star_clipped");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const double a = std::stod(rows[r][hat]);
        CHECK(a >= 0.2);
        CHECK(a <= 1.0);
        CHECK(a == doctest::Approx(std::stod(rows[r][star])).epsilon(1e-8));
    }
}

TEST_CASE("adaptive-alpha-demo regression mode keeps alpha clipped") {
    const fs::path out = kTmp / "demo_reg.csv";
    REQUIRE(run("adaptive-alpha-demo --problem regression --epochs 4 --dim 6 --out " +
                out.string()) == 0);
    const auto rows = read_csv(out);
    const auto& header = rows[0];
    const auto hat = column_index(header, "alpha_hat");
    REQUIRE(rows.size() > 2);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const double a = std::stod(rows[r][hat]);
        CHECK(a >= 0.2);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("worker cap does not change the output bytes") {
    const fs::path a = kTmp / "threads_a.csv";
    const fs::path b = kTmp / "threads_b.csv";
    const std::string args =
        "nqm-sweep --mode comparison --gamma-points 6 --alpha-points 5 --dim 10 "
        "--horizon 100 --out ";
    const std::string redirect = " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(
                ("LOOKAHEAD_LAB_THREADS=1 " + kBin + " " + args + a.string() + redirect)
                    .c_str())) == 0);
    REQUIRE(WEXITSTATUS(std::system(
                ("LOOKAHEAD_LAB_THREADS=4 " + kBin + " " + args + b.string() + redirect)
                    .c_str())) == 0);
    std::string ta = slurp(a), tb = slurp(b);
    size_t pos;
    while ((pos = tb.find("threads_b")) != std::string::npos) tb.replace(pos, 9, "threads_a");
    CHECK(ta == tb);
}

TEST_CASE("nqm-sweep horizon defaults use the full-size grids") {
    const fs::path out = kTmp / "full_sweep.csv";
    REQUIRE(run("nqm-sweep --mode horizon --horizons 1000 --out " + out.string()) == 0);
    const auto rows = read_csv(out);
    // 100 learning rates, 50 alpha values: (1 + 50) rows per gamma per horizon
    CHECK(rows.size() - 1 == 100 * (1 + 50));
}

TEST_CASE("train applies step decay from the command line") {
    const fs::path out = kTmp / "decay";
    REQUIRE(run("train --epochs 4 --count 64 --heldout-count 32 --gamma 0.1 "
                "--lr-decay-epochs 2 --lr-decay-factor 4 --out " +
                out.string()) == 0);
    CHECK(slurp(kTmp / "decay.jsonl").find("train_loss") != std::string::npos);
}

TEST_CASE("help exits cleanly and unknown subcommands are usage errors") {
    CHECK(run("--help") == 0);
    CHECK(run("bogus-subcommand") == 2);
}
