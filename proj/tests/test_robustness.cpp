#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cgen/errors.hpp"
#include "cgen/pgm.hpp"
#include "cgen/robustness.hpp"

using namespace cgen;
using ad::Shape;
using ad::Tensor;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// A miniature but fully wired comparison setup: tiny VAE + classifier over
// the nav image shape and two frozen controllers with different seeds.
struct TinyCompareRig {
    nn::Generator<float> g{{1, 64, 64}, 4, true, 301, 2};
    nn::Classifier<float> c{{1, 64, 64}, 302, 2};
    nn::Predictor<float> p1{{1, 64, 64}, 10, 303, 2};
    nn::Predictor<float> p2{{1, 64, 64}, 10, 304, 2};

    TinyCompareRig() {
        p1.set_frozen(true);
        p2.set_frozen(true);
    }

    std::vector<NamedController> controllers() {
        return {{"a", &p1}, {"b", &p2}};
    }

    CompareConfig config() const {
        CompareConfig cfg;
        cfg.scenarios = 4;
        cfg.min_barrier_scenes = 2;
        cfg.goals_deg = {-15, 15};
        cfg.scene_seed = 9;
        cfg.search.max_steps = 5;
        cfg.search.lr = 0.05;
        cfg.search.weights.mode = CGenMode::Regression;
        cfg.search.weights.alpha = 0.5;
        cfg.search.weights.beta = 0.2;
        cfg.search.weights.gamma = 0.3;
        cfg.probe.trials = 3;
        cfg.probe.eta_step = 0.05;
        cfg.probe.eta_max = 0.2;
        cfg.probe.seed = 12;
        return cfg;
    }
};

}  // namespace

TEST_CASE("probe configuration is validated") {
    NoiseProbeConfig cfg;
    cfg.epsilon = 0.0;
    CHECK_THROWS_AS(validate_probe_config(cfg), ConfigError);
    cfg.epsilon = 0.1;
    cfg.eta_step = 0.0;
    CHECK_THROWS_AS(validate_probe_config(cfg), ConfigError);
    cfg.eta_step = 0.5;
    cfg.eta_max = 0.2;  // schedule would be empty
    CHECK_THROWS_AS(validate_probe_config(cfg), ConfigError);
    cfg.eta_max = 2.0;
    cfg.trials = 0;
    CHECK_THROWS_AS(validate_probe_config(cfg), ConfigError);
    cfg.trials = 20;
    CHECK_NOTHROW(validate_probe_config(cfg));
}

TEST_CASE("a constant predictor never reaches its noise limit") {
    const std::function<Tensor<float>(const Tensor<float>&)> constant =
        [](const Tensor<float>& b) { return Tensor<float>::full({b.dim(0), 2}, 0.5f); };
    auto x = Tensor<float>::full({1, 8, 8}, 0.5f);
    NoiseProbeConfig cfg;
    cfg.trials = 5;
    const auto res = noise_probe_fn<float>(constant, x, cfg);
    CHECK(res.eta_star == 2.0);
    for (const double e : res.per_trial) CHECK(e == 2.0);
}

TEST_CASE("the identity probe with single-pixel noise crosses at sqrt(epsilon)") {
    // p(x) = x flattened and a unit impulse at one pixel give a squared shift
    // of exactly eta^2, so the first schedule step at or past sqrt(0.1) wins.
    const std::function<Tensor<double>(const Tensor<double>&)> identity =
        [](const Tensor<double>& b) {
            return ad::reshape(b, {b.dim(0), b.numel() / b.dim(0)});
        };
    auto x = Tensor<double>::full({1, 4, 4}, 0.5);
    auto impulse = Tensor<double>::zeros({1, 4, 4});
    impulse.data()[5] = 1.0;
    const std::vector<Tensor<double>> noise = {impulse};

    NoiseProbeConfig cfg;
    cfg.trials = 4;
    const auto res = noise_probe_fn<double>(identity, x, cfg, &noise);
    CHECK(res.eta_star == doctest::Approx(0.32).epsilon(1e-12));
    for (const double e : res.per_trial) CHECK(e == doctest::Approx(0.32).epsilon(1e-12));

    // shape mismatch in the override is rejected
    const std::vector<Tensor<double>> wrong = {Tensor<double>::zeros({1, 2, 2})};
    CHECK_THROWS_AS(noise_probe_fn<double>(identity, x, cfg, &wrong), DimensionError);
}

TEST_CASE("probe walks report the first crossing and replay deterministically") {
    nn::Predictor<float> p({1, 16, 16}, 3, 311, 2);
    Rng rng(312);
    auto x = Tensor<float>::zeros({1, 16, 16});
    for (auto& v : x.data()) v = static_cast<float>(rng.uniform(0.2, 0.8));

    NoiseProbeConfig cfg;
    cfg.trials = 6;
    cfg.seed = 77;
    cfg.epsilon = 0.01;
    const auto res = noise_probe(p, x, cfg);
    REQUIRE(res.per_trial.size() == 6);

    // independent single-row replay of trial 0 with the same noise field
    const auto mu = probe_noise<float>(x.shape(), cfg.seed, 0);
    const auto base = p.predict(ad::reshape(x, {1, 1, 16, 16}));
    const auto diff_at = [&](double eta) {
        auto noisy = Tensor<float>::zeros({1, 1, 16, 16});
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double v = static_cast<double>(x.data()[i]) +
                             eta * static_cast<double>(mu.data()[i]);
            noisy.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        const auto pred = p.predict(noisy);
        double d = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            const double e = static_cast<double>(pred.data()[j]) -
                             static_cast<double>(base.data()[j]);
            d += e * e;
        }
        return d;
    };
    double first = cfg.eta_max;
    for (double eta = cfg.eta_step; eta <= cfg.eta_max + 1e-12; eta += cfg.eta_step) {
        if (diff_at(eta) >= cfg.epsilon) {
            first = eta;
            break;
        }
    }
    CHECK(res.per_trial[0] == doctest::Approx(first).epsilon(1e-9));
    if (res.per_trial[0] > cfg.eta_step && res.per_trial[0] < cfg.eta_max) {
        CHECK(diff_at(res.per_trial[0]) >= cfg.epsilon);
        CHECK(diff_at(res.per_trial[0] - cfg.eta_step) < cfg.epsilon);
    }

    // bitwise determinism across runs
    const auto res2 = noise_probe(p, x, cfg);
    for (std::size_t t = 0; t < 6; ++t) CHECK(res.per_trial[t] == res2.per_trial[t]);
}

TEST_CASE("the controller family shares architecture and diverges by data") {
    ControllerFamilyConfig cfg;
    cfg.scenes = 12;
    cfg.val_scenes = 6;
    cfg.epochs = 6;
    cfg.batch_size = 6;
    cfg.base_width = 2;
    cfg.data_seed = 21;
    cfg.model_seed = 22;
    cfg.val_threshold = 10.0;  // sanity bound only; quality is probed elsewhere

    const auto fam = train_controller_family(cfg);
    CHECK(fam.a.out_dim() == 10);
    CHECK(fam.b.out_dim() == 10);
    CHECK(fam.c.out_dim() == 10);
    CHECK(fam.log_a.rows.size() == 6);
    CHECK(fam.log_b.rows.size() == 6);
    CHECK(fam.log_c.rows.size() == 6);
    CHECK(std::isfinite(fam.val_mse_c));
    // different data must separate the weights
    CHECK(fam.a.hash() != fam.b.hash());
    CHECK(fam.a.hash() != fam.c.hash());
    CHECK(fam.b.hash() != fam.c.hash());
    CHECK(fam.warnings.empty());
    // training actually moved each controller
    CHECK(fam.log_a.rows.back().l_p < fam.log_a.rows.front().l_p);
    CHECK(fam.log_c.rows.back().l_p < fam.log_c.rows.front().l_p);

    ControllerFamilyConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train_controller_family(bad), ConfigError);
}

TEST_CASE("the comparison grid is complete, aggregated, and deterministic") {
    TinyCompareRig rig;
    const auto cfg = rig.config();
    const std::uint64_t h1 = rig.p1.hash(), h2 = rig.p2.hash();

    const auto report = robustness_compare(rig.g, rig.c, rig.controllers(), cfg);

    // grid completeness: 2 controllers x 4 scenarios x 2 goals
    REQUIRE(report.cells.size() == 16);
    REQUIRE(report.summaries.size() == 2);
    REQUIRE(report.scenarios.size() == 4);
    CHECK(report.goals_deg == cfg.goals_deg);
    for (const auto& cell : report.cells) {
        CHECK_FALSE(cell.failed);
        CHECK(cell.eta_star > 0.0);
        CHECK(std::isfinite(cell.l_total));
    }

    // the barrier quota was honored
    std::size_t barriers = 0;
    for (const bool b : report.scenario_has_barrier) barriers += b ? 1 : 0;
    CHECK(barriers >= 2);

    // per-controller mean equals the mean of its recorded cells
    for (const auto& sum : report.summaries) {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& cell : report.cells) {
            if (cell.controller != sum.name || cell.failed) continue;
            total += cell.l_total;
            ++n;
        }
        REQUIRE(n > 0);
        CHECK(sum.mean_l_total == doctest::Approx(total / n).epsilon(1e-9));
        CHECK(sum.eta_per_scenario.size() == 4);
    }

    // untouched controllers
    CHECK(rig.p1.hash() == h1);
    CHECK(rig.p2.hash() == h2);

    // rerun is bitwise identical
    const auto replay = robustness_compare(rig.g, rig.c, rig.controllers(), cfg);
    REQUIRE(replay.cells.size() == report.cells.size());
    for (std::size_t i = 0; i < report.cells.size(); ++i) {
        CHECK(replay.cells[i].l_total == report.cells[i].l_total);
        CHECK(replay.cells[i].eta_star == report.cells[i].eta_star);
    }
}

TEST_CASE("caller-supplied scenes replace seeded sampling") {
    TinyCompareRig rig;
    auto cfg = rig.config();
    cfg.scenarios = 99;  // ignored when scenes are explicit

    std::vector<env::NavScene> scenes;
    Rng rng(41);
    for (int i = 0; i < 3; ++i) scenes.push_back(env::sample_nav_scene(rng, env::Complexity::Empty));

    const auto report = robustness_compare(rig.g, rig.c, rig.controllers(), cfg, &scenes);
    CHECK(report.scenarios.size() == 3);
    CHECK(report.cells.size() == 2 * 3 * 2);
    // empty scenes cannot satisfy the barrier quota: warn, don't resample
    bool warned = false;
    for (const auto& w : report.warnings) {
        if (w.find("barrier scenes") != std::string::npos) warned = true;
    }
    CHECK(warned);
    for (const bool b : report.scenario_has_barrier) CHECK_FALSE(b);
}

TEST_CASE("comparison misuse is rejected up front") {
    TinyCompareRig rig;
    auto cfg = rig.config();

    rig.p2.set_frozen(false);
    CHECK_THROWS_AS(robustness_compare(rig.g, rig.c, rig.controllers(), cfg), StateError);
    rig.p2.set_frozen(true);

    auto wrong = cfg;
    wrong.search.weights = CGenWeights{};  // classification mode
    CHECK_THROWS_AS(robustness_compare(rig.g, rig.c, rig.controllers(), wrong), ConfigError);

    nn::Generator<float> plain({1, 64, 64}, 4, false, 305, 2);
    CHECK_THROWS_AS(robustness_compare(plain, rig.c, rig.controllers(), cfg),
                    UnsupportedError);

    auto dupes = rig.controllers();
    dupes[1].name = "a";
    CHECK_THROWS_AS(robustness_compare(rig.g, rig.c, dupes, cfg), ConfigError);

    CHECK_THROWS_AS(robustness_compare(rig.g, rig.c, {}, cfg), ConfigError);
}

TEST_CASE("report serialization round-trips values and marks failures") {
    TinyCompareRig rig;
    auto report = robustness_compare(rig.g, rig.c, rig.controllers(), rig.config());
    // inject one failed cell to exercise the gap path
    report.cells[3].failed = true;
    report.cells[3].fail_reason = "synthetic failure";

    const auto csv_path = temp_path("robustness_cells.csv");
    write_robustness_csv(csv_path, report);
    std::ifstream in(csv_path);
    REQUIRE(static_cast<bool>(in));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "controller,scenario_id,goal_deg,l_g,l_c,l_p,l_total,eta_star");
    std::size_t rows = 0, nan_rows = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cols;
        while (std::getline(ls, cell, ',')) cols.push_back(cell);
        REQUIRE(cols.size() == 8);
        if (std::isnan(std::stod(cols[3]))) ++nan_rows;
        ++rows;
    }
    CHECK(rows == 16);
    CHECK(nan_rows == 1);
    std::remove(csv_path.c_str());

    // heatmaps: normalization recovers losses within pgm quantization
    const auto prefix = temp_path("robustness_heat");
    const auto infos = emit_heatmaps(report, prefix);
    REQUIRE(infos.size() == 2);
    for (const auto& info : infos) {
        const auto img = io::read_pgm(info.pgm_path);
        REQUIRE(ad::same_shape(img.shape(), {1, 4 * 8, 2 * 8}));
        const double denom = info.max_l - info.min_l;
        for (const auto& cell : report.cells) {
            if (cell.controller != info.controller) continue;
            const std::size_t gi = cell.goal_deg == report.goals_deg[0] ? 0 : 1;
            const double px = static_cast<double>(
                img.data()[(cell.scenario_id * 8 + 4) * 16 + gi * 8 + 4]);
            if (cell.failed) {
                CHECK(px == 0.0);
                CHECK(info.gaps);
                continue;
            }
            const double recovered = info.min_l + px * denom;
            CHECK(std::abs(recovered - cell.l_total) <= denom / 255.0 + 1e-12);
        }

        // the matrix csv reparses to the exact recorded doubles
        std::ifstream mat(info.matrix_path);
        REQUIRE(static_cast<bool>(mat));
        std::string header;
        REQUIRE(std::getline(mat, header));
        CHECK(header.find("scenario_id,goal_") == 0);
        std::size_t s = 0;
        while (std::getline(mat, line)) {
            std::istringstream ls(line);
            std::string cell;
            std::getline(ls, cell, ',');
            CHECK(std::stoul(cell) == s);
            std::size_t gi = 0;
            while (std::getline(ls, cell, ',')) {
                const double v = std::stod(cell);
                for (const auto& rc : report.cells) {
                    if (rc.controller == info.controller && rc.scenario_id == s &&
                        rc.goal_deg == report.goals_deg[gi]) {
                        if (rc.failed) {
                            CHECK(std::isnan(v));
                        } else {
                            CHECK(v == rc.l_total);  // exact: max_digits10 round trip
                        }
                    }
                }
                ++gi;
            }
            ++s;
        }
        std::remove(info.pgm_path.c_str());
        std::remove(info.matrix_path.c_str());
    }

    // summary text carries the verdicts and the normalization constants
    const auto sum_path = temp_path("robustness_summary.txt");
    write_robustness_summary(sum_path, report, infos);
    const auto text = slurp(sum_path);
    CHECK(text.find("ordering (mean l_total non-decreasing):") != std::string::npos);
    CHECK(text.find("barrier scenes") != std::string::npos);
    CHECK(text.find("noise medians within factor 2:") != std::string::npos);
    CHECK(text.find("controller a:") != std::string::npos);
    CHECK(text.find("min=") != std::string::npos);
    std::remove(sum_path.c_str());

    CHECK_THROWS_AS(write_robustness_csv("/nonexistent/dir/x.csv", report), IoError);
    CHECK_THROWS_AS(write_robustness_summary("/nonexistent/dir/x.txt", report, {}), IoError);
}

TEST_CASE("a constant-loss grid renders a uniform heat image") {
    RobustnessReport report;
    report.goals_deg = {0, 15};
    report.scenarios.resize(3);
    report.scenario_has_barrier = {false, false, false};
    ControllerSummary sum;
    sum.name = "solo";
    report.summaries.push_back(sum);
    for (std::size_t s = 0; s < 3; ++s) {
        for (const double g : report.goals_deg) {
            RobustnessCell cell;
            cell.controller = "solo";
            cell.scenario_id = s;
            cell.goal_deg = g;
            cell.l_total = 0.7;
            report.cells.push_back(cell);
        }
    }

    const auto prefix = temp_path("robustness_flat");
    const auto infos = emit_heatmaps(report, prefix);
    REQUIRE(infos.size() == 1);
    CHECK(infos[0].min_l == 0.7);
    CHECK(infos[0].max_l == 0.7);
    const auto img = io::read_pgm(infos[0].pgm_path);
    const float first = img.data()[0];
    for (const float v : img.data()) CHECK(v == first);
    std::remove(infos[0].pgm_path.c_str());
    std::remove(infos[0].matrix_path.c_str());
}
