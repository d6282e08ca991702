#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "contagion_lens/errors.hpp"
#include "contagion_lens/experiments.hpp"
#include "contagion_lens/grid.hpp"

using namespace clens;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("clens_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig tiny_exp1(const fs::path& out) {
    ExperimentConfig cfg;
    cfg.id = 1;
    cfg.out_dir = out;
    cfg.egos_per_cell = 200;
    cfg.betas = {0.1, 0.9};
    cfg.phis = {0.1, 0.9};
    cfg.heatmap_svg = false;
    return cfg;
}

} // namespace

TEST_CASE("config files") {
    std::istringstream in("# comment\nseed = 42\nbetas = 0.2, 0.4\nnetwork = ba\nn = 500\nm = 3\n\ncriterion = gini\n");
    auto kv = parse_config(in, "cfg");
    ExperimentConfig cfg;
    apply_config(kv, cfg);
    CHECK(cfg.seed == 42);
    CHECK(cfg.betas == std::vector<double>{0.2, 0.4});
    REQUIRE(std::holds_alternative<BaSpec>(cfg.network));
    CHECK(std::get<BaSpec>(cfg.network).n == 500);
    CHECK(std::get<BaSpec>(cfg.network).m == 3);
    CHECK(cfg.criterion == Criterion::Gini);

    std::istringstream unknown("colour = blue\n");
    CHECK_THROWS_AS(apply_config(parse_config(unknown, "u"), cfg), ConfigError);
    std::istringstream bad("seed = many\n");
    CHECK_THROWS_AS(apply_config(parse_config(bad, "b"), cfg), ConfigError);
    std::istringstream noeq("seed 4\n");
    CHECK_THROWS_AS(parse_config(noeq, "n"), ParseError);

    auto snap = nlohmann::json::parse(config_snapshot_json(cfg));
    CHECK(snap.at("seed") == 42);
}

TEST_CASE("full scale sizes") {
    ExperimentConfig cfg;
    cfg.apply_full_scale();
    CHECK(cfg.egos_per_cell == 10000);
    CHECK(cfg.realisations == 10);
    CHECK(cfg.train_per_class == 6000);
    CHECK(cfg.test_per_class == 2000);
}

TEST_CASE("invalid experiment requests") {
    ExperimentConfig cfg;
    cfg.out_dir = scratch("invalid");
    cfg.id = 6;
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
    cfg.id = 5;
    CHECK_THROWS_AS(run_experiment(cfg), OrchestrationError);
    cfg.id = 1;
    cfg.betas.clear();
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}

TEST_CASE("experiment 1 is reproducible and writes its artifacts") {
    auto a = scratch("exp1a"), b = scratch("exp1b");
    auto r1 = run_experiment(tiny_exp1(a));
    auto r2 = run_experiment(tiny_exp1(b));
    CHECK(r1.grids.at("accuracy_grid") == r2.grids.at("accuracy_grid"));
    CHECK(r1.metrics.at("cx_recall_violations") == 0.0);
    for (const char* f : {"accuracy_grid.csv", "theory_grid.csv", "difference_grid.csv", "run_manifest.json"})
        CHECK(fs::exists(a / f));

    std::ifstream grid(a / "accuracy_grid.csv");
    auto read = read_grid_csv(grid, "grid");
    CHECK(read == r1.grids.at("accuracy_grid"));

    std::ifstream man(a / "run_manifest.json");
    auto j = nlohmann::json::parse(man);
    CHECK(j.at("seed") == 1);
    CHECK(j.at("config").at("egos_per_cell") == 200);

    auto other = tiny_exp1(scratch("exp1c"));
    other.seed = 2;
    CHECK_FALSE(run_experiment(other).grids.at("accuracy_grid") == r1.grids.at("accuracy_grid"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("matched networks have comparable mean degree") {
    auto specs = matched_networks(1000);
    REQUIRE(specs.size() == 4);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        auto g = generate(specs[i], 1);
        CHECK(std::abs(g.mean_degree() - 4.0) < 0.6);
    }
}

TEST_CASE("atomic writes replace the target") {
    auto dir = scratch("atomic");
    fs::create_directories(dir);
    write_atomically(dir / "x.json", "{\"a\":1}");
    write_atomically(dir / "x.json", "{\"a\":2}");
    std::ifstream in(dir / "x.json");
    CHECK(nlohmann::json::parse(in).at("a") == 2);
    CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
    fs::remove_all(dir);
}

TEST_CASE("accuracy grids") {
    AccuracyGrid g("beta", "phi", {0.1, 0.5}, {0.2, 0.8});
    g.set(0, 0, {0.5, 0.7});
    g.set(1, 1, {0.9});
    CHECK(g.value[0][0] == doctest::Approx(0.6));
    CHECK(g.stddev[0][0] == doctest::Approx(std::sqrt(0.02)));
    CHECK(g.mean() == doctest::Approx(0.75));
    CHECK(g.min() == doctest::Approx(0.6));

    std::stringstream buf;
    write_grid_csv(g, buf);
    CHECK(read_grid_csv(buf, "buf") == g);

    auto dir = scratch("heatmap");
    fs::create_directories(dir);
    emit_heatmap(g, dir / "g.csv", true, "title");
    CHECK(fs::exists(dir / "g.csv"));
    CHECK(fs::exists(dir / "g.svg"));
    fs::remove_all(dir);
}
