#include "contagion_lens/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "contagion_lens/contagion.hpp"
#include "contagion_lens/errors.hpp"
#include "contagion_lens/features.hpp"
#include "contagion_lens/ingest.hpp"
#include "contagion_lens/likelihood.hpp"
#include "contagion_lens/log.hpp"
#include "contagion_lens/parallel.hpp"
#include "contagion_lens/tempnet.hpp"

namespace clens {

using nlohmann::json;

// ---------------------------------------------------------------- config

void ExperimentConfig::apply_full_scale() {
    egos_per_cell = 10000;
    realisations = 10;
    train_per_class = 6000;
    test_per_class = 2000;
    pooled_train_per_class = 6000;
    max_cascades = 4000;
    exp4_source_n = 400000;
    exp4_target_n = 100000;
    exp4_cascades = 1;
    sweep_cascades = 2;
    global_train_rows = 18000;
    subset_trees = 100;
    subset_train_per_class = 6000;
    subset_test_per_class = 2000;
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] == '-')
            throw std::invalid_argument(v);
        auto x = std::stoull(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes")
        return true;
    if (v == "0" || v == "false" || v == "no")
        return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v))
        out.push_back(to_double(key, item));
    if (out.empty())
        throw ConfigError("config key '" + key + "': empty list");
    return out;
}

} // namespace

std::map<std::string, std::string> parse_config(std::istream& in, const std::string& source) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(source, lineno, "expected key = value");
        auto key = trim(line.substr(0, eq));
        if (key.empty())
            throw ParseError(source, lineno, "empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

void apply_config(const std::map<std::string, std::string>& values, ExperimentConfig& cfg) {
    // Network keys are collected first and combined at the end.
    std::string network;
    std::map<std::string, std::string> net;
    for (const auto& [key, v] : values) {
        if (key == "id")
            cfg.id = static_cast<int>(to_uint(key, v));
        else if (key == "seed")
            cfg.seed = to_uint(key, v);
        else if (key == "out")
            cfg.out_dir = v;
        else if (key == "jobs")
            cfg.jobs = static_cast<unsigned>(std::max<std::uint64_t>(1, to_uint(key, v)));
        else if (key == "heatmap_svg")
            cfg.heatmap_svg = to_bool(key, v);
        else if (key == "progress")
            cfg.progress = to_bool(key, v);
        else if (key == "betas")
            cfg.betas = to_doubles(key, v);
        else if (key == "phis")
            cfg.phis = to_doubles(key, v);
        else if (key == "r_nb")
            cfg.r_nb = to_double(key, v);
        else if (key == "egos_per_cell")
            cfg.egos_per_cell = to_uint(key, v);
        else if (key == "star_horizon")
            cfg.star_horizon = static_cast<Step>(to_uint(key, v));
        else if (key == "degree_trials")
            cfg.degree_law.trials = to_uint(key, v);
        else if (key == "degree_p")
            cfg.degree_law.p = to_double(key, v);
        else if (key == "network")
            network = v;
        else if (key == "n" || key == "p" || key == "m" || key == "k_ring" || key == "rewire_p" ||
                 key == "sbm_blocks" || key == "sbm_p_in" || key == "sbm_p_out" || key == "edge_list")
            net[key] = v;
        else if (key == "r")
            cfg.r = to_double(key, v);
        else if (key == "stop_fraction")
            cfg.stop_fraction = to_double(key, v);
        else if (key == "t_max")
            cfg.t_max = static_cast<Step>(to_uint(key, v));
        else if (key == "realisations")
            cfg.realisations = to_uint(key, v);
        else if (key == "train_per_class")
            cfg.train_per_class = to_uint(key, v);
        else if (key == "test_per_class")
            cfg.test_per_class = to_uint(key, v);
        else if (key == "max_cascades")
            cfg.max_cascades = to_uint(key, v);
        else if (key == "pooled_train_per_class")
            cfg.pooled_train_per_class = to_uint(key, v);
        else if (key == "n_trees")
            cfg.n_trees = to_uint(key, v);
        else if (key == "criterion")
            cfg.criterion = parse_criterion(v);
        else if (key == "features_per_split")
            cfg.features_per_split = to_uint(key, v);
        else if (key == "subset_cells") {
            cfg.subset_cells.clear();
            for (const auto& item : split_list(v))
                cfg.subset_cells.push_back(to_uint(key, item));
        } else if (key == "subset_trees")
            cfg.subset_trees = to_uint(key, v);
        else if (key == "subset_train_per_class")
            cfg.subset_train_per_class = to_uint(key, v);
        else if (key == "subset_test_per_class")
            cfg.subset_test_per_class = to_uint(key, v);
        else if (key == "exp4_source_n")
            cfg.exp4_source_n = to_uint(key, v);
        else if (key == "exp4_source_m")
            cfg.exp4_source_m = to_uint(key, v);
        else if (key == "exp4_target_n")
            cfg.exp4_target_n = to_uint(key, v);
        else if (key == "exp4_edge_list")
            cfg.exp4_edge_list = v;
        else if (key == "exp4_r")
            cfg.exp4_r = to_double(key, v);
        else if (key == "activity_spread")
            cfg.activity_spread = to_double(key, v);
        else if (key == "filter_quantile")
            cfg.filter_quantile = to_double(key, v);
        else if (key == "sweep_quantiles")
            cfg.sweep_quantiles = to_doubles(key, v);
        else if (key == "exp4_cascades")
            cfg.exp4_cascades = to_uint(key, v);
        else if (key == "sweep_cascades")
            cfg.sweep_cascades = to_uint(key, v);
        else if (key == "exp4_train_fraction")
            cfg.exp4_train_fraction = to_double(key, v);
        else if (key == "global_train_rows")
            cfg.global_train_rows = to_uint(key, v);
        else if (key == "param_model")
            cfg.param_model = v;
        else if (key == "model")
            cfg.model = v;
        else if (key == "corpus") {
            cfg.corpus.clear();
            for (const auto& item : split_list(v))
                cfg.corpus.emplace_back(item);
        } else if (key == "follow_graph")
            cfg.follow_graph = v;
        else if (key == "window_days")
            cfg.window_days = to_double(key, v);
        else if (key == "fixture_source_n")
            cfg.fixture_source_n = to_uint(key, v);
        else if (key == "fixture_n")
            cfg.fixture_n = to_uint(key, v);
        else
            throw ConfigError("unknown config key '" + key + "'");
    }
    if (network.empty() && !net.empty())
        network = "er";
    if (network.empty())
        return;
    auto get = [&](const std::string& k) -> std::optional<std::string> {
        auto it = net.find(k);
        return it == net.end() ? std::nullopt : std::optional(it->second);
    };
    const std::size_t n = get("n") ? to_uint("n", *get("n")) : 1000;
    if (network == "er") {
        cfg.network = ErSpec{n, get("p") ? to_double("p", *get("p")) : 4.0 / static_cast<double>(n)};
    } else if (network == "ba") {
        cfg.network = BaSpec{n, get("m") ? to_uint("m", *get("m")) : 2};
    } else if (network == "ws") {
        cfg.network = WsSpec{n, get("k_ring") ? to_uint("k_ring", *get("k_ring")) : 4,
                             get("rewire_p") ? to_double("rewire_p", *get("rewire_p")) : 0.1};
    } else if (network == "sbm") {
        const std::size_t blocks = get("sbm_blocks") ? to_uint("sbm_blocks", *get("sbm_blocks")) : 4;
        if (blocks == 0)
            throw ConfigError("sbm_blocks must be >= 1");
        const double p_in = get("sbm_p_in") ? to_double("sbm_p_in", *get("sbm_p_in")) : 0.0128;
        const double p_out = get("sbm_p_out") ? to_double("sbm_p_out", *get("sbm_p_out")) : 0.001;
        SbmSpec s;
        s.block_sizes.assign(blocks, n / blocks);
        s.block_p.assign(blocks, std::vector<double>(blocks, p_out));
        for (std::size_t b = 0; b < blocks; ++b)
            s.block_p[b][b] = p_in;
        cfg.network = s;
    } else if (network == "edgelist") {
        auto path = get("edge_list");
        if (!path)
            throw ConfigError("network = edgelist needs edge_list");
        cfg.network = EdgeListSpec{*path};
    } else {
        throw ConfigError("unknown network '" + network + "'");
    }
    validate(cfg.network);
}

std::string config_snapshot_json(const ExperimentConfig& cfg) {
    json j;
    j["id"] = cfg.id;
    j["seed"] = cfg.seed;
    j["out"] = cfg.out_dir.string();
    j["jobs"] = cfg.jobs;
    j["betas"] = cfg.betas;
    j["phis"] = cfg.phis;
    j["r_nb"] = cfg.r_nb;
    j["egos_per_cell"] = cfg.egos_per_cell;
    j["star_horizon"] = cfg.star_horizon;
    j["degree_trials"] = cfg.degree_law.trials;
    j["degree_p"] = cfg.degree_law.p;
    j["network"] = model_name(cfg.network);
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ErSpec>) {
                j["n"] = s.n;
                j["p"] = s.p;
            } else if constexpr (std::is_same_v<T, BaSpec>) {
                j["n"] = s.n;
                j["m"] = s.m;
            } else if constexpr (std::is_same_v<T, WsSpec>) {
                j["n"] = s.n;
                j["k_ring"] = s.k_ring;
                j["rewire_p"] = s.rewire_p;
            } else if constexpr (std::is_same_v<T, SbmSpec>) {
                j["sbm_block_sizes"] = s.block_sizes;
                j["sbm_block_p"] = s.block_p;
            } else if constexpr (std::is_same_v<T, EdgeListSpec>) {
                j["edge_list"] = s.path.string();
            }
        },
        cfg.network);
    j["r"] = cfg.r;
    j["stop_fraction"] = cfg.stop_fraction;
    j["t_max"] = cfg.t_max;
    j["realisations"] = cfg.realisations;
    j["train_per_class"] = cfg.train_per_class;
    j["test_per_class"] = cfg.test_per_class;
    j["max_cascades"] = cfg.max_cascades;
    j["pooled_train_per_class"] = cfg.pooled_train_per_class;
    j["n_trees"] = cfg.n_trees;
    j["criterion"] = to_string(cfg.criterion);
    j["features_per_split"] = cfg.features_per_split;
    j["subset_cells"] = cfg.subset_cells;
    j["subset_trees"] = cfg.subset_trees;
    j["subset_train_per_class"] = cfg.subset_train_per_class;
    j["subset_test_per_class"] = cfg.subset_test_per_class;
    j["exp4_source_n"] = cfg.exp4_source_n;
    j["exp4_source_m"] = cfg.exp4_source_m;
    j["exp4_target_n"] = cfg.exp4_target_n;
    if (cfg.exp4_edge_list)
        j["exp4_edge_list"] = cfg.exp4_edge_list->string();
    j["exp4_r"] = cfg.exp4_r;
    j["activity_spread"] = cfg.activity_spread;
    j["filter_quantile"] = cfg.filter_quantile;
    j["sweep_quantiles"] = cfg.sweep_quantiles;
    j["exp4_cascades"] = cfg.exp4_cascades;
    j["sweep_cascades"] = cfg.sweep_cascades;
    j["exp4_train_fraction"] = cfg.exp4_train_fraction;
    j["global_train_rows"] = cfg.global_train_rows;
    if (cfg.param_model)
        j["param_model"] = cfg.param_model->string();
    if (cfg.model)
        j["model"] = cfg.model->string();
    std::vector<std::string> corpus;
    for (const auto& c : cfg.corpus)
        corpus.push_back(c.string());
    j["corpus"] = corpus;
    if (cfg.follow_graph)
        j["follow_graph"] = cfg.follow_graph->string();
    j["window_days"] = cfg.window_days;
    j["fixture_source_n"] = cfg.fixture_source_n;
    j["fixture_n"] = cfg.fixture_n;
    return j.dump(1);
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out << content << '\n';
        if (!out)
            throw IoError("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string manifest_json(const std::string& command, const std::string& config_json, std::uint64_t seed,
                          double seconds) {
    json j;
    j["command"] = command;
    j["config"] = json::parse(config_json);
    j["seed"] = seed;
    j["version"] = CONTAGION_LENS_VERSION;
    j["duration_seconds"] = seconds;
    return j.dump(1);
}

// ---------------------------------------------------------------- helpers

namespace {

constexpr std::uint64_t kExp1 = 1, kSync = 2, kExp4 = 4, kExp5 = 5;

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    return out;
}

void note(const ExperimentConfig& cfg, const std::string& msg) {
    if (cfg.progress)
        std::cerr << msg << std::endl;
}

std::string cell_name(double b, double p) {
    std::ostringstream ss;
    ss << "b" << b << "_p" << p;
    return ss.str();
}

ForestConfig forest_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    ForestConfig f;
    f.n_trees = cfg.n_trees;
    f.criterion = cfg.criterion;
    f.features_per_split = cfg.features_per_split;
    f.seed = seed;
    f.jobs = cfg.jobs;
    return f;
}

/// Keeps a uniform sample of at most `capacity` items from a stream.
template <class T>
struct Reservoir {
    std::size_t capacity = 0;
    std::size_t seen = 0;
    std::vector<T> items;

    void offer(T item, Rng& rng) {
        ++seen;
        if (items.size() < capacity) {
            items.push_back(std::move(item));
            return;
        }
        std::uniform_int_distribution<std::size_t> pick(0, seen - 1);
        auto j = pick(rng);
        if (j < capacity)
            items[j] = std::move(item);
    }
};

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]])
                ++j;
            for (std::size_t t = i; t <= j; ++t)
                r[idx[t]] = 0.5 * static_cast<double>(i + j) + 1.0;
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return da > 0 && db > 0 ? num / std::sqrt(da * db) : 0.0;
}

void write_confusion(const ConfusionMatrix& cm, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "true\\predicted,Sm,Cx,St\n";
    for (auto m : kMechanisms) {
        out << to_string(m);
        for (auto c : cm.counts[index_of(m)])
            out << ',' << c;
        out << '\n';
    }
}

/// Per-feature membership in the best three-feature subset of each cell;
/// tied subsets share the cell's weight. Impurity-importance top-3 counts
/// are kept alongside.
struct TopThree {
    std::array<double, kFeatureCount> subset_hits{};
    std::array<double, kFeatureCount> importance_hits{};
    std::size_t cells = 0, models = 0;

    void add(const SubsetSearchResult& r) {
        std::size_t ties = 0;
        for (const auto& s : r.all)
            ties += s.accuracy == r.best.accuracy;
        for (const auto& s : r.all)
            if (s.accuracy == r.best.accuracy)
                for (auto f : s.features)
                    subset_hits[f] += 1.0 / static_cast<double>(ties);
        ++cells;
    }
    void add(const ForestModel& m) {
        auto imp = feature_importance(m);
        for (std::size_t i = 0; i < std::min<std::size_t>(3, imp.size()); ++i)
            importance_hits[imp[i].feature] += 1.0;
        ++models;
    }
    double frequency(std::size_t f) const { return cells ? subset_hits[f] / static_cast<double>(cells) : 0.0; }
    double importance_frequency(std::size_t f) const {
        return models ? importance_hits[f] / static_cast<double>(models) : 0.0;
    }
};

void write_top_three(const TopThree& t, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "feature,top3_subset_frequency,top3_importance_frequency\n";
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        out << kFeatureNames[f] << ',' << t.frequency(f) << ',' << t.importance_frequency(f) << '\n';
}

void record_top_three(const TopThree& t, ExperimentResult& res) {
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        res.metrics["top3." + std::string(kFeatureNames[f])] = t.frequency(f);
        res.metrics["importance_top3." + std::string(kFeatureNames[f])] = t.importance_frequency(f);
    }
}

/// First `per_class` rows of each class.
Dataset capped(const Dataset& d, std::size_t per_class) {
    std::array<std::size_t, 3> taken{};
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (taken[index_of(d.y[i])]++ < per_class)
            keep.push_back(i);
    return d.subset(keep);
}

ForestConfig search_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    ForestConfig fc = forest_config(cfg, seed);
    fc.n_trees = cfg.subset_trees;
    fc.criterion = Criterion::Gini;
    return fc;
}

void emit(const ExperimentConfig& cfg, ExperimentResult& res, const std::string& name, const AccuracyGrid& g,
          const std::string& title) {
    auto path = cfg.out_dir / (name + ".csv");
    emit_heatmap(g, path, cfg.heatmap_svg, title);
    res.artifacts.push_back(path);
    res.grids[name] = g;
}

// ---------------------------------------------------------------- experiment 1

ExperimentResult run_exp1(const ExperimentConfig& cfg) {
    ExperimentResult res;
    AccuracyGrid sim("beta", "phi", cfg.betas, cfg.phis), theory = sim, diff = sim;
    std::size_t violations = 0, cx_total = 0, non_adopters = 0;
    const std::size_t half = std::max<std::size_t>(1, cfg.egos_per_cell / 2);
    const std::size_t n_cells = cfg.betas.size() * cfg.phis.size();
    struct CellOut {
        double acc = 0, theory = 0;
        std::size_t violations = 0, cx = 0, idle = 0;
    };
    std::vector<CellOut> cells(n_cells);
    parallel_for(n_cells, cfg.jobs, [&](std::size_t cell) {
        const double beta = cfg.betas[cell / cfg.phis.size()], phi = cfg.phis[cell % cfg.phis.size()];
        const std::array<NodeAssignment, 2> egos{NodeAssignment::simple(beta), NodeAssignment::complex(phi)};
        auto stars = simulate_star_ensemble(cfg.degree_law, egos, cfg.r_nb, cfg.star_horizon, half,
                                            derive_seed(cfg.seed, {kExp1, cell}));
        const ModelParams params{beta, phi, cfg.r_nb};
        std::array<std::size_t, 2> right{}, total{};
        auto& out = cells[cell];
        for (const auto& s : stars) {
            auto obs = observation_from_star(s);
            if (!obs) {
                ++out.idle;
                continue;
            }
            const auto truth = *s.fired;
            const auto pred = classify_known(*obs, params, 2).predicted;
            ++total[index_of(truth)];
            if (pred == truth)
                ++right[index_of(truth)];
            if (truth == Mechanism::Cx) {
                ++out.cx;
                if (pred != Mechanism::Cx)
                    ++out.violations;
            }
        }
        double recall_sm = total[0] ? static_cast<double>(right[0]) / total[0] : 1.0;
        double recall_cx = total[1] ? static_cast<double>(right[1]) / total[1] : 1.0;
        out.acc = 0.5 * (recall_sm + recall_cx);
        out.theory = analytic_accuracy(cfg.degree_law, beta, phi, cfg.r_nb);
    });
    double max_diff = 0.0;
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        const auto i = cell / cfg.phis.size(), j = cell % cfg.phis.size();
        sim.set(i, j, {cells[cell].acc});
        theory.set(i, j, {cells[cell].theory});
        diff.set(i, j, {cells[cell].acc - cells[cell].theory});
        max_diff = std::max(max_diff, std::abs(cells[cell].acc - cells[cell].theory));
        violations += cells[cell].violations;
        cx_total += cells[cell].cx;
        non_adopters += cells[cell].idle;
    }
    emit(cfg, res, "accuracy_grid", sim, "simulated accuracy, known parameters");
    emit(cfg, res, "theory_grid", theory, "analytic accuracy");
    emit(cfg, res, "difference_grid", diff, "simulated minus analytic");
    res.metrics["mean"] = sim.mean();
    res.metrics["theory_mean"] = theory.mean();
    res.metrics["max_abs_difference"] = max_diff;
    res.metrics["cx_recall_violations"] = static_cast<double>(violations);
    res.metrics["cx_egos"] = static_cast<double>(cx_total);
    res.metrics["non_adopters"] = static_cast<double>(non_adopters);
    return res;
}

// ---------------------------------------------------------------- experiments 2 and 3

struct SyncCellData {
    std::array<Reservoir<EgoObservation>, 3> pools;
    Reservoir<EgoObservation> natural;
    std::vector<EgoObservation> all_for_r; ///< unused placeholder for large runs
    double share_sum = 0.0;
    std::size_t share_n = 0;
    double st = 0.0, steps = 0.0;
    std::size_t cascades = 0;

    double r_literal() const { return share_n ? share_sum / static_cast<double>(share_n) : 0.0; }
    double r_alternative() const { return steps > 0 ? st / steps : 0.0; }
};

SyncCellData generate_sync_cell(const std::shared_ptr<const Graph>& g, double beta, double phi,
                                const ExperimentConfig& cfg, std::uint64_t base) {
    SyncCellData d;
    const std::size_t need = cfg.train_per_class + cfg.test_per_class;
    for (auto& p : d.pools)
        p.capacity = need;
    d.natural.capacity = 3 * cfg.test_per_class;
    Rng keep = make_rng(base, {0});
    const std::size_t n = g->n_nodes();
    while (d.cascades < cfg.max_cascades) {
        const std::size_t c = d.cascades++;
        Rng arng = make_rng(base, {1, c});
        std::vector<NodeAssignment> assign;
        assign.reserve(n);
        for (std::size_t v = 0; v < n; ++v)
            assign.push_back(bernoulli(arng, 0.5) ? NodeAssignment::simple(beta) : NodeAssignment::complex(phi));
        auto rec = simulate_network(g, std::move(assign), cfg.r, cfg.stop_fraction, cfg.t_max,
                                    derive_seed(base, {2, c}));
        for (NodeId v = 0; v < n; ++v) {
            auto obs = observation_from_cascade(rec, v);
            if (!obs || !obs->classifiable())
                continue;
            obs->provenance = derive_seed(base, {3, c, v});
            if (obs->susceptible_steps > 0) {
                d.share_sum += static_cast<double>(obs->exposure_steps) / static_cast<double>(obs->susceptible_steps);
                ++d.share_n;
                d.steps += static_cast<double>(obs->susceptible_steps);
                if (obs->true_label == Mechanism::St)
                    d.st += 1.0;
            }
            d.natural.offer(*obs, keep);
            d.pools[index_of(*obs->true_label)].offer(std::move(*obs), keep);
        }
        if (std::all_of(d.pools.begin(), d.pools.end(), [&](const auto& p) { return p.seen >= need; }))
            break;
    }
    return d;
}

struct Split {
    std::vector<EgoObservation> train, test;
};

Split split_pools(SyncCellData& d, const ExperimentConfig& cfg, std::uint64_t seed, const std::string& where) {
    Split s;
    Rng rng{seed};
    const std::size_t need = cfg.train_per_class + cfg.test_per_class;
    for (auto m : kMechanisms) {
        auto& items = d.pools[index_of(m)].items;
        std::shuffle(items.begin(), items.end(), rng);
        std::size_t n_train = cfg.train_per_class, n_test = cfg.test_per_class;
        if (items.size() < need) {
            warn(where + ": only " + std::to_string(items.size()) + " " + std::string(to_string(m)) +
                 " instances after " + std::to_string(d.cascades) + " cascades");
            n_train = items.size() * cfg.train_per_class / need;
            n_test = items.size() - n_train;
        }
        s.train.insert(s.train.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.test.insert(s.test.end(), items.begin() + static_cast<std::ptrdiff_t>(n_train),
                      items.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
    }
    return s;
}

Dataset to_dataset(std::span<const EgoObservation> obs, const std::string& provenance) {
    Dataset d;
    d.provenance = provenance;
    for (const auto& o : obs)
        d.add(extract(o), *o.true_label, o.provenance);
    return d;
}

struct SyncPlan {
    bool known = true;
    bool estimated = true;
    bool subset = false;
    std::size_t realisations = 1;
    bool importance = false;
};

struct SyncOutcome {
    AccuracyGrid llh_known, forest_known, llh_est, forest_est, llh_known_natural;
    std::vector<ConfusionMatrix> cm_llh_known, cm_forest_known, cm_llh_est, cm_forest_est;
    std::vector<std::pair<double, double>> r_hat; ///< per cell, last realisation
    TopThree top;
    std::vector<std::vector<double>> subset_best; ///< [cell][k-1]
    std::vector<std::vector<std::string>> subset_names;
    double mean_cascades = 0.0;
};

std::string subset_label(const std::vector<std::size_t>& f) {
    std::string s;
    for (auto i : f) {
        if (!s.empty())
            s += '+';
        s += kFeatureNames[i];
    }
    return s;
}

SyncOutcome run_sync_study(const ExperimentConfig& cfg, const ModelSpec& network, const SyncPlan& plan,
                           const std::string& tag) {
    SyncOutcome out;
    const std::size_t nb = cfg.betas.size(), np = cfg.phis.size(), n_cells = nb * np;
    AccuracyGrid base("beta", "phi", cfg.betas, cfg.phis);
    out.llh_known = out.forest_known = out.llh_est = out.forest_est = out.llh_known_natural = base;
    out.cm_llh_known.resize(n_cells);
    out.cm_forest_known.resize(n_cells);
    out.cm_llh_est.resize(n_cells);
    out.cm_forest_est.resize(n_cells);
    out.r_hat.resize(n_cells);
    std::vector<std::vector<double>> s_llh_known(n_cells), s_forest_known(n_cells), s_llh_est(n_cells),
        s_forest_est(n_cells), s_natural(n_cells);
    std::size_t cascades = 0;

    for (std::size_t real = 0; real < plan.realisations; ++real) {
        auto g = std::make_shared<const Graph>(generate(network, derive_seed(cfg.seed, {kSync, real, 0})));
        std::vector<SyncCellData> data(n_cells);
        parallel_for(n_cells, cfg.jobs, [&](std::size_t cell) {
            data[cell] = generate_sync_cell(g, cfg.betas[cell / np], cfg.phis[cell % np], cfg,
                                            derive_seed(cfg.seed, {kSync, real, cell + 1}));
        });
        std::vector<Split> splits(n_cells);
        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            cascades += data[cell].cascades;
            splits[cell] = split_pools(data[cell], cfg, derive_seed(cfg.seed, {kSync, real, cell + 1, 4}),
                                       tag + " cell " + cell_name(cfg.betas[cell / np], cfg.phis[cell % np]));
        }
        note(cfg, tag + ": realisation " + std::to_string(real + 1) + "/" + std::to_string(plan.realisations) +
                      " simulated");

        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            const double beta = cfg.betas[cell / np], phi = cfg.phis[cell % np];
            const auto& sp = splits[cell];
            if (sp.test.empty())
                continue;
            if (plan.known) {
                const ModelParams params{beta, phi, cfg.r};
                ConfusionMatrix cm;
                for (const auto& o : sp.test)
                    ++cm.counts[index_of(*o.true_label)][index_of(classify_known(o, params, 3).predicted)];
                s_llh_known[cell].push_back(cm.accuracy());
                out.cm_llh_known[cell] += cm;
                ConfusionMatrix nat;
                for (const auto& o : data[cell].natural.items)
                    ++nat.counts[index_of(*o.true_label)][index_of(classify_known(o, params, 3).predicted)];
                s_natural[cell].push_back(nat.accuracy());

                auto model = train(to_dataset(sp.train, tag), forest_config(cfg, derive_seed(cfg.seed, {kSync, real, cell + 1, 5})));
                auto ev = evaluate(model, to_dataset(sp.test, tag));
                s_forest_known[cell].push_back(ev.accuracy);
                out.cm_forest_known[cell] += ev.confusion;
                out.top.add(model);
                if (plan.importance && real == 0) {
                    auto tr = capped(to_dataset(sp.train, tag), cfg.subset_train_per_class);
                    auto te = capped(to_dataset(sp.test, tag), cfg.subset_test_per_class);
                    out.top.add(best_subsets_of_size(
                        tr, te, 3, search_config(cfg, derive_seed(cfg.seed, {kSync, 0, cell + 1, 9}))));
                }
            }
            if (plan.estimated) {
                const double r_hat = data[cell].r_literal();
                out.r_hat[cell] = {r_hat, data[cell].r_alternative()};
                ConfusionMatrix cm;
                for (const auto& o : sp.test)
                    ++cm.counts[index_of(*o.true_label)][index_of(classify_unknown(o, r_hat).predicted)];
                s_llh_est[cell].push_back(cm.accuracy());
                out.cm_llh_est[cell] += cm;
            }
            note(cfg, tag + ": realisation " + std::to_string(real + 1) + " cell " + cell_name(beta, phi) + " done");
        }

        if (plan.estimated) {
            // One model over the whole grid.
            std::array<std::vector<const EgoObservation*>, 3> by_class;
            for (const auto& sp : splits)
                for (const auto& o : sp.train)
                    by_class[index_of(*o.true_label)].push_back(&o);
            Rng rng = make_rng(cfg.seed, {kSync, real, 0, 6});
            Dataset pooled;
            pooled.provenance = tag + " pooled";
            for (auto& v : by_class) {
                std::shuffle(v.begin(), v.end(), rng);
                for (std::size_t i = 0; i < std::min(v.size(), cfg.pooled_train_per_class); ++i)
                    pooled.add(extract(*v[i]), *v[i]->true_label, v[i]->provenance);
            }
            auto model = train(pooled, forest_config(cfg, derive_seed(cfg.seed, {kSync, real, 0, 7})));
            for (std::size_t cell = 0; cell < n_cells; ++cell) {
                if (splits[cell].test.empty())
                    continue;
                auto ev = evaluate(model, to_dataset(splits[cell].test, tag));
                s_forest_est[cell].push_back(ev.accuracy);
                out.cm_forest_est[cell] += ev.confusion;
            }
        }

        if (plan.subset && real == 0) {
            for (auto cell : cfg.subset_cells) {
                if (cell >= n_cells)
                    throw ConfigError("subset_cells: cell " + std::to_string(cell) + " outside the grid");
                std::vector<EgoObservation> tr, te;
                for (auto m : kMechanisms) {
                    std::size_t taken = 0;
                    for (const auto& o : splits[cell].train)
                        if (o.true_label == m && taken < cfg.subset_train_per_class) {
                            tr.push_back(o);
                            ++taken;
                        }
                    taken = 0;
                    for (const auto& o : splits[cell].test)
                        if (o.true_label == m && taken < cfg.subset_test_per_class) {
                            te.push_back(o);
                            ++taken;
                        }
                }
                const auto fc = search_config(cfg, derive_seed(cfg.seed, {kSync, 0, cell + 1, 8}));
                auto res = best_subset_search(to_dataset(tr, tag), to_dataset(te, tag), kFeatureCount, fc);
                std::vector<double> best;
                std::vector<std::string> names;
                for (const auto& r : res) {
                    best.push_back(r.best.accuracy);
                    names.push_back(subset_label(r.best.features));
                }
                out.subset_best.push_back(best);
                out.subset_names.push_back(names);
                note(cfg, tag + ": subset search cell " + std::to_string(cell) + " done");
            }
        }
    }
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        const auto i = cell / np, j = cell % np;
        out.llh_known.set(i, j, s_llh_known[cell]);
        out.forest_known.set(i, j, s_forest_known[cell]);
        out.llh_est.set(i, j, s_llh_est[cell]);
        out.forest_est.set(i, j, s_forest_est[cell]);
        out.llh_known_natural.set(i, j, s_natural[cell]);
    }
    out.mean_cascades = static_cast<double>(cascades) / static_cast<double>(n_cells * plan.realisations);
    return out;
}

void write_confusions(const ExperimentConfig& cfg, ExperimentResult& res, const std::string& prefix,
                      const std::vector<ConfusionMatrix>& cms) {
    const std::size_t np = cfg.phis.size();
    for (std::size_t cell = 0; cell < cms.size(); ++cell) {
        if (cms[cell].total() == 0)
            continue;
        auto path = cfg.out_dir / ("confusion_" + prefix + "_" + cell_name(cfg.betas[cell / np], cfg.phis[cell % np]) + ".csv");
        write_confusion(cms[cell], path);
        res.artifacts.push_back(path);
    }
}

ExperimentResult run_exp2(const ExperimentConfig& cfg) {
    ExperimentResult res;
    auto s = run_sync_study(cfg, cfg.network, {true, false, !cfg.subset_cells.empty(), cfg.realisations, true}, "exp2");
    emit(cfg, res, "accuracy_grid", s.llh_known, "likelihood accuracy, known parameters");
    emit(cfg, res, "forest_grid", s.forest_known, "random forest accuracy, per-cell models");
    emit(cfg, res, "likelihood_natural_grid", s.llh_known_natural, "likelihood accuracy, natural class mix");
    write_confusions(cfg, res, "likelihood", s.cm_llh_known);
    write_confusions(cfg, res, "forest", s.cm_forest_known);
    auto imp = cfg.out_dir / "importance.csv";
    write_top_three(s.top, imp);
    res.artifacts.push_back(imp);
    record_top_three(s.top, res);
    res.metrics["llh_mean"] = s.llh_known.mean();
    res.metrics["llh_min"] = s.llh_known.min();
    res.metrics["llh_natural_mean"] = s.llh_known_natural.mean();
    res.metrics["forest_mean"] = s.forest_known.mean();
    res.metrics["forest_min"] = s.forest_known.min();
    res.metrics["mean_cascades_per_cell"] = s.mean_cascades;
    if (!s.subset_best.empty()) {
        auto path = cfg.out_dir / "subset_search.csv";
        auto out = open_out(path);
        out << "cell,size,best_subset,accuracy\n";
        for (std::size_t c = 0; c < s.subset_best.size(); ++c)
            for (std::size_t k = 0; k < s.subset_best[c].size(); ++k)
                out << cfg.subset_cells[c] << ',' << k + 1 << ',' << s.subset_names[c][k] << ','
                    << s.subset_best[c][k] << '\n';
        res.artifacts.push_back(path);
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            double m = 0.0;
            for (const auto& row : s.subset_best)
                m += row[k];
            res.metrics["subset_best_" + std::to_string(k + 1)] = m / static_cast<double>(s.subset_best.size());
        }
    }
    return res;
}

ExperimentResult run_exp3(const ExperimentConfig& cfg) {
    ExperimentResult res;
    auto s = run_sync_study(cfg, cfg.network, {false, true, false, cfg.realisations}, "exp3");
    emit(cfg, res, "accuracy_grid", s.llh_est, "likelihood accuracy, estimated parameters");
    emit(cfg, res, "forest_grid", s.forest_est, "random forest accuracy, one pooled model");
    write_confusions(cfg, res, "likelihood", s.cm_llh_est);
    write_confusions(cfg, res, "forest", s.cm_forest_est);
    auto path = cfg.out_dir / "r_hat.csv";
    {
        auto out = open_out(path);
        out << "beta,phi,r_hat,r_hat_alt\n";
        for (std::size_t cell = 0; cell < s.r_hat.size(); ++cell)
            out << cfg.betas[cell / cfg.phis.size()] << ',' << cfg.phis[cell % cfg.phis.size()] << ','
                << s.r_hat[cell].first << ',' << s.r_hat[cell].second << '\n';
    }
    res.artifacts.push_back(path);
    res.metrics["llh_mean"] = s.llh_est.mean();
    res.metrics["llh_min"] = s.llh_est.min();
    res.metrics["forest_mean"] = s.forest_est.mean();
    res.metrics["forest_min"] = s.forest_est.min();
    double llh_row = 0, forest_row = 0;
    for (std::size_t j = 0; j < cfg.phis.size(); ++j) {
        llh_row += s.llh_est.value[0][j];
        forest_row += s.forest_est.value[0][j];
    }
    res.metrics["llh_first_beta_row"] = llh_row / static_cast<double>(cfg.phis.size());
    res.metrics["forest_first_beta_row"] = forest_row / static_cast<double>(cfg.phis.size());
    return res;
}

} // namespace

std::vector<NetworkSummary> compare_networks(const ExperimentConfig& cfg, const std::vector<ModelSpec>& networks) {
    std::vector<NetworkSummary> out;
    for (const auto& spec : networks) {
        validate(spec);
        auto s = run_sync_study(cfg, spec, {true, true, false, cfg.realisations}, "compare " + model_name(spec));
        out.push_back({model_name(spec), s.llh_known.mean(), s.forest_known.mean(), s.llh_est.mean(),
                       s.forest_est.mean()});
    }
    return out;
}

std::vector<ModelSpec> matched_networks(std::size_t n) {
    SbmSpec sbm;
    const std::size_t blocks = 4;
    sbm.block_sizes.assign(blocks, n / blocks);
    const double bs = static_cast<double>(n / blocks);
    // Three quarters of the mean degree inside the block.
    const double p_in = 3.0 / (bs - 1.0), p_out = 1.0 / (static_cast<double>(n) - bs);
    sbm.block_p.assign(blocks, std::vector<double>(blocks, p_out));
    for (std::size_t b = 0; b < blocks; ++b)
        sbm.block_p[b][b] = p_in;
    return {ErSpec{n, 4.0 / static_cast<double>(n - 1)}, BaSpec{n, 2}, WsSpec{n, 4, 0.1}, sbm};
}

namespace {

// ---------------------------------------------------------------- experiment 4

EmpiricalParamModel param_model_for(const ExperimentConfig& cfg) {
    auto m = cfg.param_model ? load_param_model(*cfg.param_model) : reference_param_model();
    m.filter_quantile = cfg.filter_quantile;
    return m;
}

std::shared_ptr<const Graph> activity_network(const ExperimentConfig& cfg, std::size_t source_n, std::size_t target_n,
                                              std::uint64_t seed) {
    Graph source;
    if (cfg.exp4_edge_list)
        source = largest_connected_component(load_edge_list(*cfg.exp4_edge_list).graph).graph;
    else
        source = generate(BaSpec{source_n, cfg.exp4_source_m}, derive_seed(seed, {0}));
    if (target_n >= source.n_nodes())
        return std::make_shared<const Graph>(std::move(source));
    return std::make_shared<const Graph>(degree_biased_subsample(source, target_n, derive_seed(seed, {1})).graph);
}

ActivityTable activities_for(const Graph& g, const EmpiricalParamModel& m, double spread, std::uint64_t seed) {
    std::size_t kmax = 1;
    for (NodeId v = 0; v < g.n_nodes(); ++v)
        kmax = std::max(kmax, g.degree(v));
    return assign_activities(g, m.activity_table(degree_class(kmax)), spread, seed);
}

struct Band {
    double lo = 0.0, hi = 1.0;
};

/// One activity-driven cascade; parameters drawn per node from the model
/// within the given bands.
TemporalCascadeRecord temporal_cascade(const std::shared_ptr<const Graph>& g, const ActivityTable& act,
                                       const EmpiricalParamModel& m, Band beta_band, Band phi_band, double r,
                                       std::uint64_t seed) {
    Rng rng = make_rng(seed, {0});
    std::vector<NodeAssignment> assign;
    assign.reserve(g->n_nodes());
    for (NodeId v = 0; v < g->n_nodes(); ++v) {
        if (bernoulli(rng, 0.5))
            assign.push_back(NodeAssignment::simple(m.sample_beta(g->degree(v), rng, beta_band.lo, beta_band.hi)));
        else
            assign.push_back(NodeAssignment::complex(m.sample_phi(rng, phi_band.lo, phi_band.hi)));
    }
    ActivityDrivenOptions opt;
    opt.r = r;
    return simulate_activity_driven(g, act, std::move(assign), opt, derive_seed(seed, {1}));
}

void append_temporal_rows(const TemporalCascadeRecord& rec, std::uint64_t base, Dataset& out) {
    for (auto& obs : observations_from_temporal(rec)) {
        if (!obs.classifiable() || !obs.true_label)
            continue;
        out.add(extract(obs), *obs.true_label, derive_seed(base, {obs.ego}));
    }
}

std::pair<Dataset, Dataset> split_rows(const Dataset& d, double train_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng{seed};
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(idx.size())));
    std::span<const std::size_t> all(idx);
    return {d.subset(all.first(n_train)), d.subset(all.subspan(n_train))};
}

ExperimentResult run_exp4(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const auto model = param_model_for(cfg);
    {
        auto path = cfg.out_dir / "param_model.json";
        save_param_model(model, path);
        res.artifacts.push_back(path);
    }
    const std::uint64_t net_seed = derive_seed(cfg.seed, {kExp4, 0});
    auto g = activity_network(cfg, cfg.exp4_source_n, cfg.exp4_target_n, net_seed);
    const auto act = activities_for(*g, model, cfg.activity_spread, derive_seed(cfg.seed, {kExp4, 1}));
    note(cfg, "exp4: network with " + std::to_string(g->n_nodes()) + " nodes, " + std::to_string(g->n_edges()) +
                  " edges");

    const std::vector<double> quint{1, 2, 3, 4, 5};
    AccuracyGrid grid("beta_quintile", "phi_quintile", quint, quint);
    TopThree top;
    std::vector<Step> waits;
    Dataset global_train, global_test;
    std::size_t rows_total = 0;
    std::array<std::size_t, 3> class_rows{};
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const std::size_t cell = i * 5 + j;
            Dataset rows;
            rows.provenance = "exp4 " + std::to_string(cell);
            for (std::size_t c = 0; c < cfg.exp4_cascades; ++c) {
                const auto seed = derive_seed(cfg.seed, {kExp4, 2, cell, c});
                auto rec = temporal_cascade(g, act, model, {i / 5.0, (i + 1) / 5.0}, {j / 5.0, (j + 1) / 5.0},
                                            cfg.exp4_r, seed);
                auto w = waiting_times(rec);
                waits.insert(waits.end(), w.begin(), w.end());
                append_temporal_rows(rec, seed, rows);
            }
            rows_total += rows.size();
            auto cc = rows.class_counts();
            for (std::size_t k = 0; k < 3; ++k)
                class_rows[k] += cc[k];
            auto [tr, te] = split_rows(rows, cfg.exp4_train_fraction, derive_seed(cfg.seed, {kExp4, 3, cell}));
            if (tr.empty() || te.empty())
                continue;
            auto forest = train(tr, forest_config(cfg, derive_seed(cfg.seed, {kExp4, 4, cell})));
            auto ev = evaluate(forest, te);
            grid.set(i, j, {ev.accuracy});
            top.add(forest);
            top.add(best_subsets_of_size(capped(tr, cfg.subset_train_per_class), capped(te, cfg.subset_test_per_class),
                                         3, search_config(cfg, derive_seed(cfg.seed, {kExp4, 10, cell}))));
            write_confusion(ev.confusion, cfg.out_dir / ("confusion_forest_q" + std::to_string(i + 1) + "_q" +
                                                         std::to_string(j + 1) + ".csv"));
            global_train.append(tr);
            global_test.append(te);
            note(cfg, "exp4: cell " + std::to_string(cell + 1) + "/25 accuracy " + std::to_string(ev.accuracy));
        }
    emit(cfg, res, "accuracy_grid", grid, "random forest accuracy, activity-driven cascades");
    record_top_three(top, res);
    write_top_three(top, cfg.out_dir / "importance.csv");
    res.artifacts.push_back(cfg.out_dir / "importance.csv");

    {
        auto path = cfg.out_dir / "waiting_times.csv";
        auto out = open_out(path);
        out << "waiting_time\n";
        for (auto w : waits)
            out << w << '\n';
        res.artifacts.push_back(path);
    }
    double mean = 0.0, var = 0.0;
    for (auto w : waits)
        mean += static_cast<double>(w);
    mean /= std::max<double>(1.0, static_cast<double>(waits.size()));
    for (auto w : waits)
        var += (static_cast<double>(w) - mean) * (static_cast<double>(w) - mean);
    var /= std::max<double>(1.0, static_cast<double>(waits.size()));
    res.metrics["waiting_mean"] = mean;
    res.metrics["waiting_cv"] = mean > 0 ? std::sqrt(var) / mean : 0.0;
    res.metrics["waiting_n"] = static_cast<double>(waits.size());

    // Pooled model for corpus classification.
    {
        Rng rng = make_rng(cfg.seed, {kExp4, 5});
        std::vector<std::size_t> idx(global_train.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(idx.size(), cfg.global_train_rows));
        std::sort(idx.begin(), idx.end());
        auto pooled = global_train.subset(idx);
        pooled.provenance = "exp4 pooled";
        auto forest = train(pooled, forest_config(cfg, derive_seed(cfg.seed, {kExp4, 6})));
        res.metrics["global_forest_accuracy"] = evaluate(forest, global_test).accuracy;
        auto path = cfg.out_dir / "forest.json";
        save_forest(forest, path);
        res.artifacts.push_back(path);
    }

    // Robustness to the filtered share of the parameter distributions.
    {
        auto path = cfg.out_dir / "filter_sweep.csv";
        auto out = open_out(path);
        out << "filter_quantile,rows,accuracy,recall_Sm,recall_Cx,recall_St\n";
        std::vector<double> qs, sc;
        for (std::size_t s = 0; s < cfg.sweep_quantiles.size(); ++s) {
            auto mq = model;
            mq.filter_quantile = cfg.sweep_quantiles[s];
            Dataset rows;
            for (std::size_t c = 0; c < cfg.sweep_cascades; ++c) {
                const auto seed = derive_seed(cfg.seed, {kExp4, 7, s, c});
                append_temporal_rows(temporal_cascade(g, act, mq, {}, {}, cfg.exp4_r, seed), seed, rows);
            }
            auto [tr, te] = split_rows(rows, cfg.exp4_train_fraction, derive_seed(cfg.seed, {kExp4, 8, s}));
            auto forest = train(tr, forest_config(cfg, derive_seed(cfg.seed, {kExp4, 9, s})));
            auto ev = evaluate(forest, te);
            const double sm = ev.confusion.recall(Mechanism::Sm), cx = ev.confusion.recall(Mechanism::Cx);
            out << cfg.sweep_quantiles[s] << ',' << rows.size() << ',' << ev.accuracy << ',' << sm << ',' << cx << ','
                << ev.confusion.recall(Mechanism::St) << '\n';
            qs.push_back(cfg.sweep_quantiles[s]);
            sc.push_back(0.5 * (sm + cx));
            res.metrics["sweep_q" + std::to_string(s) + "_sm_cx"] = 0.5 * (sm + cx);
            note(cfg, "exp4: filter quantile " + std::to_string(cfg.sweep_quantiles[s]) + " done");
        }
        res.metrics["sweep_spearman"] = spearman(qs, sc);
        res.artifacts.push_back(path);
    }
    res.metrics["mean"] = grid.mean();
    res.metrics["min"] = grid.min();
    res.metrics["rows"] = static_cast<double>(rows_total);
    for (auto m : kMechanisms)
        res.metrics["rows_" + std::string(to_string(m))] = static_cast<double>(class_rows[index_of(m)]);
    return res;
}

// ---------------------------------------------------------------- experiment 5

ExperimentResult run_exp5(const ExperimentConfig& cfg) {
    ExperimentResult res;
    if (!cfg.model)
        throw OrchestrationError("experiment 5 needs a trained forest (forest.json from experiment 4); pass --model");
    if (!std::filesystem::exists(*cfg.model))
        throw OrchestrationError("experiment 5: forest model " + cfg.model->string() + " does not exist");
    const auto forest = load_forest(*cfg.model);

    std::vector<std::filesystem::path> corpus_paths = cfg.corpus;
    std::filesystem::path follow_path;
    std::optional<TemporalCascadeRecord> fixture;
    if (corpus_paths.empty()) {
        const auto model = param_model_for(cfg);
        auto g = activity_network(cfg, cfg.fixture_source_n, cfg.fixture_n, derive_seed(cfg.seed, {kExp5, 0}));
        auto act = activities_for(*g, model, cfg.activity_spread, derive_seed(cfg.seed, {kExp5, 1}));
        fixture = temporal_cascade(g, act, model, {}, {}, cfg.exp4_r, derive_seed(cfg.seed, {kExp5, 2}));
        corpus_paths = {cfg.out_dir / "fixture_corpus.jsonl"};
        follow_path = cfg.out_dir / "fixture_follow.txt";
        auto c = open_out(corpus_paths[0]);
        auto f = open_out(follow_path);
        write_fixture_corpus(*fixture, c, f);
        res.artifacts.push_back(corpus_paths[0]);
        res.artifacts.push_back(follow_path);
    } else {
        if (!cfg.follow_graph)
            throw ConfigError("experiment 5: a corpus needs its follow graph (follow_graph / --follow)");
        follow_path = *cfg.follow_graph;
    }
    const auto follow = load_follow_graph(follow_path);
    const auto corpus = load_corpus(corpus_paths, default_hashtags(), follow);
    auto observations = build_observations(corpus, cfg.window_days);
    if (fixture) {
        // Truth comes from the cascade; the seed carries no mechanism.
        std::erase_if(observations, [&](EgoObservation& o) {
            auto v = fixture_node(corpus.streams[o.ego].ego);
            if (!v || !fixture->nodes[*v].fired)
                return true;
            o.true_label = fixture->nodes[*v].fired;
            return false;
        });
    }
    const auto cls = classify_corpus(forest, observations);

    {
        auto path = cfg.out_dir / "counts_table.csv";
        auto out = open_out(path);
        write_counts_table(cls, out);
        res.artifacts.push_back(path);
    }
    {
        auto path = cfg.out_dir / "decile_grid.csv";
        auto out = open_out(path);
        write_decile_grid(cls, out);
        res.artifacts.push_back(path);
    }
    {
        auto path = cfg.out_dir / "predictions.csv";
        auto out = open_out(path);
        out << "ego,predicted,certainty,vote_Sm,vote_Cx,vote_St,true_label\n";
        for (std::size_t k = 0; k < cls.rows.size(); ++k) {
            const auto& o = observations[cls.rows[k]];
            const auto& p = cls.predictions[k];
            out << corpus.streams[o.ego].ego << ',' << to_string(p.label) << ',' << p.certainty << ',' << p.votes[0]
                << ',' << p.votes[1] << ',' << p.votes[2] << ',' << (o.true_label ? to_string(*o.true_label) : "")
                << '\n';
        }
        res.artifacts.push_back(path);
    }
    {
        auto path = cfg.out_dir / "observations.csv";
        auto out = open_out(path);
        write_observations_csv(observations, out);
        res.artifacts.push_back(path);
    }

    // The same rows through evaluate: predicted-class totals must agree.
    Dataset rows;
    rows.provenance = "corpus";
    for (auto i : cls.rows) {
        const auto& o = observations[i];
        rows.add(extract(o), o.true_label.value_or(Mechanism::Sm), derive_seed(cfg.seed, {kExp5, 3, o.ego}));
    }
    bool consistent = true;
    if (!rows.empty()) {
        auto ev = evaluate(forest, rows);
        for (auto m : kMechanisms)
            consistent = consistent && ev.confusion.column_sum(m) == cls.forest_counts[index_of(m)];
        res.metrics["accuracy_vs_truth"] = fixture ? ev.accuracy : std::nan("");
    }
    res.metrics["consistent"] = consistent ? 1.0 : 0.0;
    res.metrics["observations"] = static_cast<double>(observations.size());
    res.metrics["classified"] = static_cast<double>(cls.rows.size());
    for (auto m : kMechanisms) {
        res.metrics["forest_" + std::string(to_string(m))] = static_cast<double>(cls.forest_counts[index_of(m)]);
        res.metrics["likelihood_" + std::string(to_string(m))] =
            static_cast<double>(cls.likelihood_counts[index_of(m)]);
    }
    std::size_t populated = 0;
    for (const auto& row : cls.deciles)
        for (const auto& cell : row)
            populated += cell.n() > 0;
    res.metrics["decile_cells_populated"] = static_cast<double>(populated);
    res.metrics["r_hat"] = cls.r_hat;
    return res;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.id < 1 || cfg.id > 5)
        throw ConfigError("experiment id must be 1..5, got " + std::to_string(cfg.id));
    if (cfg.betas.empty() || cfg.phis.empty())
        throw ConfigError("parameter grids must be nonempty");
    if (cfg.realisations == 0 || cfg.egos_per_cell == 0 || cfg.n_trees == 0)
        throw ConfigError("realisations, egos_per_cell and n_trees must be positive");
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec)
        throw IoError("cannot create " + cfg.out_dir.string() + ": " + ec.message());
    const auto start = std::chrono::steady_clock::now();
    ExperimentResult res;
    switch (cfg.id) {
    case 1: res = run_exp1(cfg); break;
    case 2: res = run_exp2(cfg); break;
    case 3: res = run_exp3(cfg); break;
    case 4: res = run_exp4(cfg); break;
    case 5: res = run_exp5(cfg); break;
    }
    res.id = cfg.id;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    {
        auto path = cfg.out_dir / "metrics.json";
        json j = json::object();
        for (const auto& [k, v] : res.metrics)
            j[k] = std::isfinite(v) ? json(v) : json(nullptr);
        write_atomically(path, j.dump(1));
        res.artifacts.push_back(path);
    }
    auto manifest = cfg.out_dir / "run_manifest.json";
    write_atomically(manifest, manifest_json("experiment", config_snapshot_json(cfg), cfg.seed, secs));
    res.artifacts.push_back(manifest);
    return res;
}

} // namespace clens
