#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "contagion_lens/forest.hpp"
#include "contagion_lens/graph.hpp"
#include "contagion_lens/grid.hpp"

namespace clens {

struct ExperimentConfig {
    int id = 1;
    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "run";
    unsigned jobs = 1;
    bool heatmap_svg = true;
    bool progress = false; ///< per-cell progress lines on standard error

    std::vector<double> betas{0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> phis{0.1, 0.3, 0.5, 0.7, 0.9};

    // Star ensembles.
    double r_nb = 0.05;
    std::size_t egos_per_cell = 2000;
    Step star_horizon = 10000;
    StarEnsembleSpec degree_law{1, 1000, 0.004};

    // Synchronous network cascades.
    ModelSpec network = ErSpec{1000, 0.004};
    double r = 0.005;
    double stop_fraction = 1.0;
    Step t_max = 100000;
    std::size_t realisations = 5;
    std::size_t train_per_class = 1000;
    std::size_t test_per_class = 500;
    std::size_t max_cascades = 400;
    std::size_t pooled_train_per_class = 2000;

    // Forest.
    std::size_t n_trees = 100;
    Criterion criterion = Criterion::Auto;
    std::size_t features_per_split = 0;

    // Subset search: cells (row-major indices) and forest size.
    std::vector<std::size_t> subset_cells{0, 4, 12, 20, 24};
    std::size_t subset_trees = 30;
    std::size_t subset_train_per_class = 500;
    std::size_t subset_test_per_class = 300;

    // Activity-driven cascades.
    std::size_t exp4_source_n = 20000;
    std::size_t exp4_source_m = 3;
    std::size_t exp4_target_n = 3000;
    std::optional<std::filesystem::path> exp4_edge_list;
    double exp4_r = 0.005;
    double activity_spread = 0.1;
    double filter_quantile = 0.8;
    std::vector<double> sweep_quantiles{0.4, 0.6, 0.8, 1.0};
    std::size_t exp4_cascades = 2;
    std::size_t sweep_cascades = 6;
    double exp4_train_fraction = 0.7;
    std::size_t global_train_rows = 9000;
    std::optional<std::filesystem::path> param_model;

    // Corpus classification.
    std::optional<std::filesystem::path> model;
    std::vector<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> follow_graph;
    double window_days = 7.0;
    std::size_t fixture_source_n = 4000;
    std::size_t fixture_n = 1500;

    /// Full-scale sizes: 10,000 egos per cell, 10 realisations,
    /// 6,000/2,000 rows per class, 100,000-node activity network.
    void apply_full_scale();
};

/// Flat "key = value" lines; '#' starts a comment. Lists are comma separated.
std::map<std::string, std::string> parse_config(std::istream& in, const std::string& source);
/// Throws ConfigError on unknown keys or unparsable values.
void apply_config(const std::map<std::string, std::string>& values, ExperimentConfig& cfg);
std::string config_snapshot_json(const ExperimentConfig& cfg);

struct ExperimentResult {
    int id = 0;
    std::map<std::string, double> metrics;
    std::map<std::string, AccuracyGrid> grids;
    std::vector<std::filesystem::path> artifacts;
};

/// Runs one experiment and writes its artifacts plus run_manifest.json
/// under cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct NetworkSummary {
    std::string network;
    double llh_known = 0.0;
    double forest_known = 0.0;
    double llh_estimated = 0.0;
    double forest_estimated = 0.0;
};

/// Known- and estimated-parameter experiments repeated on every network.
std::vector<NetworkSummary> compare_networks(const ExperimentConfig& cfg, const std::vector<ModelSpec>& networks);

/// ER, BA, WS and SBM specs with mean degree close to 4 on n nodes.
std::vector<ModelSpec> matched_networks(std::size_t n);

/// Writes a JSON document through a temporary file and a rename.
void write_atomically(const std::filesystem::path& path, const std::string& content);

std::string manifest_json(const std::string& command, const std::string& config_json, std::uint64_t seed,
                          double seconds);

} // namespace clens
