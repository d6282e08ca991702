#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "contagion_lens/errors.hpp"
#include "contagion_lens/experiments.hpp"
#include "contagion_lens/features.hpp"
#include "contagion_lens/forest.hpp"
#include "contagion_lens/graph.hpp"
#include "contagion_lens/likelihood.hpp"
#include "contagion_lens/log.hpp"

namespace {

using namespace clens;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t value, std::uint64_t fallback) {
    if (flag->count() > 0)
        return value;
    if (const char* env = std::getenv("CONTAGION_LENS_SEED")) {
        try {
            std::size_t used = 0;
            auto s = std::stoull(env, &used);
            if (used == std::string(env).size())
                return s;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("CONTAGION_LENS_SEED is not an unsigned integer: ") + env);
    }
    return fallback;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::filesystem::path manifest_for(const std::filesystem::path& out) {
    auto p = out;
    p += ".manifest.json";
    return p;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    return out;
}

// ---------------------------------------------------------------- gen-network

struct GenArgs {
    std::string model;
    std::size_t n = 0;
    double p = 0.0;
    std::size_t m = 0;
    std::size_t k_ring = 0;
    double rewire_p = 0.0;
    std::vector<std::size_t> blocks;
    double p_in = 0.0, p_out = 0.0;
    std::vector<double> degree_binomial;
    std::size_t count = 1;
    std::uint64_t seed = 1;
    std::filesystem::path out;
};

struct GenFlags {
    CLI::Option *n, *p, *m, *k_ring, *rewire_p, *blocks, *p_in, *p_out, *degree_binomial, *seed;
};

void require(const CLI::Option* opt, const std::string& model) {
    if (opt->count() == 0)
        throw ConfigError("model " + model + " needs " + opt->get_name());
}

ModelSpec gen_spec(const GenArgs& a, const GenFlags& f) {
    if (a.model == "er") {
        require(f.n, a.model);
        require(f.p, a.model);
        return ErSpec{a.n, a.p};
    }
    if (a.model == "ba") {
        require(f.n, a.model);
        require(f.m, a.model);
        return BaSpec{a.n, a.m};
    }
    if (a.model == "ws") {
        require(f.n, a.model);
        require(f.k_ring, a.model);
        require(f.rewire_p, a.model);
        return WsSpec{a.n, a.k_ring, a.rewire_p};
    }
    if (a.model == "sbm") {
        require(f.blocks, a.model);
        require(f.p_in, a.model);
        require(f.p_out, a.model);
        SbmSpec s;
        s.block_sizes = a.blocks;
        s.block_p.assign(a.blocks.size(), std::vector<double>(a.blocks.size(), a.p_out));
        for (std::size_t i = 0; i < a.blocks.size(); ++i)
            s.block_p[i][i] = a.p_in;
        return s;
    }
    if (a.model == "star") {
        require(f.degree_binomial, a.model);
        if (a.degree_binomial[0] < 1 || a.degree_binomial[0] != std::floor(a.degree_binomial[0]))
            throw ConfigError("--degree-binomial trials must be a positive integer");
        return StarEnsembleSpec{a.count, static_cast<std::size_t>(a.degree_binomial[0]), a.degree_binomial[1]};
    }
    throw ConfigError("unknown model '" + a.model + "' (er, ba, ws, sbm, star)");
}

int run_gen_network(const GenArgs& a, const GenFlags& f) {
    const auto start = Clock::now();
    const auto seed = resolve_seed(f.seed, a.seed, 1);
    const auto spec = gen_spec(a, f);
    validate(spec);
    const auto g = generate(spec, seed);
    json header = {{"model", model_name(spec)}, {"seed", seed}, {"n_nodes", g.n_nodes()}, {"n_edges", g.n_edges()}};
    if (a.model == "star")
        header["stars"] = a.count;
    write_edge_list(g, a.out, header.dump());
    json cfg = {{"model", a.model}, {"out", a.out.string()}};
    write_atomically(manifest_for(a.out), manifest_json("gen-network", cfg.dump(), seed, seconds_since(start)));
    std::cerr << "wrote " << g.n_nodes() << " nodes, " << g.n_edges() << " edges to " << a.out.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------- experiment

struct ExpArgs {
    int id = 1;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;
    bool full_scale = false;
    std::optional<std::filesystem::path> model;
    std::vector<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> follow;
    unsigned jobs = 0;
    std::uint64_t seed = 1;
    bool quiet = false;
};

int run_experiment_cmd(const ExpArgs& a, const CLI::Option* out_flag, const CLI::Option* jobs_flag,
                       const CLI::Option* seed_flag) {
    ExperimentConfig cfg;
    if (a.full_scale)
        cfg.apply_full_scale();
    if (a.config) {
        auto in = open_in(*a.config);
        apply_config(parse_config(in, a.config->string()), cfg);
    }
    cfg.id = a.id;
    if (out_flag->count() > 0)
        cfg.out_dir = a.out;
    if (jobs_flag->count() > 0)
        cfg.jobs = std::max(1u, a.jobs);
    else if (!a.config)
        cfg.jobs = std::max(1u, std::thread::hardware_concurrency());
    cfg.seed = resolve_seed(seed_flag, a.seed, cfg.seed);
    if (a.model)
        cfg.model = a.model;
    if (!a.corpus.empty())
        cfg.corpus = a.corpus;
    if (a.follow)
        cfg.follow_graph = a.follow;
    cfg.progress = !a.quiet;

    const auto res = run_experiment(cfg);
    for (const auto& [k, v] : res.metrics)
        std::cout << k << '\t' << v << '\n';
    return 0;
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
    std::string method;
    std::filesystem::path obs;
    std::optional<std::filesystem::path> model;
    std::optional<std::filesystem::path> params;
    std::filesystem::path out;
    double r_hat = -1.0;
};

ModelParams read_params(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto kv = parse_config(in, path.string());
    ModelParams p;
    for (const auto& [k, v] : kv) {
        double x = 0.0;
        try {
            std::size_t used = 0;
            x = std::stod(v, &used);
            if (used != v.size())
                throw std::invalid_argument(v);
        } catch (const std::exception&) {
            throw ConfigError(path.string() + ": " + k + " is not a number: " + v);
        }
        if (k == "beta")
            p.beta = x;
        else if (k == "phi")
            p.phi = x;
        else if (k == "r")
            p.r = x;
        else
            throw ConfigError(path.string() + ": unknown key " + k + " (beta, phi, r)");
    }
    if (!p.beta || !p.phi)
        throw ConfigError(path.string() + ": both beta and phi are required");
    return p;
}

int run_classify(const ClassifyArgs& a) {
    const auto start = Clock::now();
    if (a.method == "forest" && !a.model)
        throw ConfigError("--method forest needs --model");
    if (a.method == "llh-known" && !a.params)
        throw ConfigError("--method llh-known needs --params");
    if (a.method != "forest" && a.method != "llh-known" && a.method != "llh-est")
        throw ConfigError("unknown method " + a.method);

    auto in = open_in(a.obs);
    const auto rows = read_observations_csv(in, a.obs.string());
    auto out = open_out(a.out);
    json cfg = {{"method", a.method}, {"obs", a.obs.string()}, {"out", a.out.string()}};

    if (a.method == "forest") {
        const auto forest = load_forest(*a.model);
        cfg["model"] = a.model->string();
        out << "ego,predicted,certainty,vote_Sm,vote_Cx,vote_St,true_label\n";
        for (const auto& row : rows) {
            const auto& o = row.observation;
            if (!o.classifiable())
                continue;
            const auto p = forest.predict(extract(o));
            out << o.ego << ',' << to_string(p.label) << ',' << p.certainty << ',' << p.votes[0] << ','
                << p.votes[1] << ',' << p.votes[2] << ',' << (o.true_label ? to_string(*o.true_label) : "") << '\n';
        }
    } else if (a.method == "llh-known") {
        const auto p = read_params(*a.params);
        cfg["params"] = a.params->string();
        write_classification_header(out);
        for (const auto& row : rows) {
            const auto& o = row.observation;
            if (!o.classifiable())
                continue;
            write_classification_row(out, o.ego, classify_known(o, p, p.r > 0.0 ? 3 : 2), o.true_label);
        }
    } else {
        double r_hat = a.r_hat;
        if (r_hat < 0.0) {
            std::vector<EgoObservation> obs;
            obs.reserve(rows.size());
            for (const auto& row : rows)
                obs.push_back(row.observation);
            r_hat = estimate_r(obs).literal;
        }
        cfg["r_hat"] = r_hat;
        write_classification_header(out);
        for (const auto& row : rows) {
            const auto& o = row.observation;
            if (!o.classifiable())
                continue;
            write_classification_row(out, o.ego, classify_unknown(o, r_hat), o.true_label);
        }
    }
    out.close();
    if (!out)
        throw IoError("error writing " + a.out.string());
    write_atomically(manifest_for(a.out), manifest_json("classify", cfg.dump(), 0, seconds_since(start)));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulate contagion cascades and classify adoption mechanisms"};
    app.set_version_flag("--version", CONTAGION_LENS_VERSION);
    app.require_subcommand(1);

    GenArgs gen;
    GenFlags gf{};
    auto* g = app.add_subcommand("gen-network", "Generate a network or star ensemble as an edge list");
    g->add_option("--model", gen.model, "er, ba, ws, sbm or star")->required();
    gf.n = g->add_option("--n", gen.n, "Number of nodes");
    gf.p = g->add_option("--p", gen.p, "ER edge probability");
    gf.m = g->add_option("--m", gen.m, "BA edges per new node");
    gf.k_ring = g->add_option("--k-ring", gen.k_ring, "WS ring degree");
    gf.rewire_p = g->add_option("--rewire-p", gen.rewire_p, "WS rewiring probability");
    gf.blocks = g->add_option("--blocks", gen.blocks, "SBM block sizes")->delimiter(',');
    gf.p_in = g->add_option("--p-in", gen.p_in, "SBM within-block probability");
    gf.p_out = g->add_option("--p-out", gen.p_out, "SBM between-block probability");
    gf.degree_binomial =
        g->add_option("--degree-binomial", gen.degree_binomial, "Star degree law: trials p")->expected(2);
    g->add_option("--count", gen.count, "Number of stars");
    gf.seed = g->add_option("--seed", gen.seed, "Master seed");
    g->add_option("--out", gen.out, "Output edge list")->required();

    ExpArgs ex;
    auto* e = app.add_subcommand("experiment", "Run one experiment");
    e->add_option("--id", ex.id, "Experiment 1..5")->required();
    e->add_option("--config", ex.config, "key = value configuration file");
    auto* out_flag = e->add_option("--out", ex.out, "Output directory");
    e->add_flag("--full-scale", ex.full_scale, "Use full-scale sizes");
    e->add_option("--model", ex.model, "Trained forest for experiment 5");
    e->add_option("--corpus", ex.corpus, "Corpus JSONL files for experiment 5");
    e->add_option("--follow", ex.follow, "Follow graph for the corpus");
    auto* jobs_flag = e->add_option("--jobs", ex.jobs, "Worker threads");
    auto* seed_flag = e->add_option("--seed", ex.seed, "Master seed");
    e->add_flag("--quiet", ex.quiet, "No progress output");

    ClassifyArgs cl;
    auto* c = app.add_subcommand("classify", "Classify an observations CSV");
    c->add_option("--method", cl.method, "llh-known, llh-est or forest")->required();
    c->add_option("--obs", cl.obs, "Observations CSV")->required();
    c->add_option("--model", cl.model, "Forest JSON");
    c->add_option("--params", cl.params, "beta/phi/r key = value file");
    c->add_option("--r-hat", cl.r_hat, "Spontaneous rate for llh-est (default: estimated)");
    c->add_option("--out", cl.out, "Predictions CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitConfig;
    }

    set_warning_sink([](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
    try {
        if (*g)
            return run_gen_network(gen, gf);
        if (*e)
            return run_experiment_cmd(ex, out_flag, jobs_flag, seed_flag);
        return run_classify(cl);
    } catch (const ParameterError& err) {
        std::cerr << "parameter error: " << err.what() << '\n';
        return kExitConfig;
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << '\n' << app.help();
        return kExitConfig;
    } catch (const OrchestrationError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitConfig;
    } catch (const ParseError& err) {
        std::cerr << "parse error: " << err.what() << '\n';
        return kExitIo;
    } catch (const IoError& err) {
        std::cerr << "i/o error: " << err.what() << '\n';
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "i/o error: " << err.what() << '\n';
        return kExitIo;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
}
