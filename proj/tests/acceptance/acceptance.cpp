// Acceptance suite: runs every experiment at desk scale and checks the
// eleven criteria. One PASS/FAIL line per criterion on standard output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "contagion_lens/contagion.hpp"
#include "contagion_lens/errors.hpp"
#include "contagion_lens/experiments.hpp"
#include "contagion_lens/features.hpp"
#include "contagion_lens/forest.hpp"
#include "contagion_lens/graph.hpp"
#include "contagion_lens/likelihood.hpp"
#include "contagion_lens/log.hpp"
#include "contagion_lens/parallel.hpp"
#include "contagion_lens/rng.hpp"

namespace {

using namespace clens;
namespace fs = std::filesystem;

struct Verdict {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, std::string name, bool pass, std::string detail) {
    std::printf("%s C%-2d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    verdicts.push_back({id, std::move(name), pass, std::move(detail)});
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

double metric(const ExperimentResult& r, const std::string& key) {
    auto it = r.metrics.find(key);
    if (it == r.metrics.end())
        throw std::runtime_error("missing metric " + key);
    return it->second;
}

bool within(double v, double centre, double tol) { return std::abs(v - centre) <= tol + 1e-12; }

ExperimentConfig base(const fs::path& out, int id, unsigned jobs) {
    ExperimentConfig cfg;
    cfg.id = id;
    cfg.seed = 1;
    cfg.jobs = jobs;
    cfg.out_dir = out / ("exp" + std::to_string(id));
    cfg.heatmap_svg = false;
    return cfg;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// Sm-ego confusion probability on an isolated star, as an exact absorbing
// chain over the number of infected neighbours (several may join per step).
double exact_star_accuracy(std::size_t k, double beta, double phi, double r) {
    const std::size_t m = required_infected(k, phi);
    auto b = [&](std::size_t n) { return 1.0 - std::pow(1.0 - beta, static_cast<double>(n)); };
    auto pmf = [&](std::size_t j, std::size_t trials) {
        const double lc = std::lgamma(trials + 1.0) - std::lgamma(j + 1.0) - std::lgamma(trials - j + 1.0);
        return std::exp(lc + static_cast<double>(j) * std::log(r) +
                        static_cast<double>(trials - j) * std::log1p(-r));
    };
    std::vector<double> f(m, 0.0);
    for (std::size_t n = m; n-- > 0;) {
        double s = 0.0;
        for (std::size_t n2 = n + 1; n2 <= k; ++n2) {
            const double q = pmf(n2 - n, k - n);
            s += q * (n2 >= m ? b(n2) : f[n2]);
        }
        const double stay = 1.0 - b(n);
        f[n] = stay * s / (1.0 - stay * pmf(0, k - n));
    }
    return 1.0 - 0.5 * f[0];
}

double exact_star_accuracy(const StarEnsembleSpec& law, double beta, double phi, double r) {
    const double mean = static_cast<double>(law.trials) * law.p;
    const auto k_max = static_cast<std::size_t>(std::ceil(mean + 20.0 * std::sqrt(mean * (1 - law.p)) + 20.0));
    const auto w = truncated_binomial_pmf(law.trials, law.p, k_max);
    double acc = 0.0, z = 0.0;
    for (std::size_t k = 1; k < w.size(); ++k) {
        acc += w[k] * exact_star_accuracy(k, beta, phi, r);
        z += w[k];
    }
    return acc / z;
}

// ---------------------------------------------------------------- criteria

void criteria_1_to_3(const fs::path& out, unsigned jobs) {
    auto cfg = base(out, 1, jobs);
    cfg.egos_per_cell = 10000;
    progress("experiment 1, 10^4 egos per cell");
    const auto res = run_experiment(cfg);
    const auto& sim = res.grids.at("accuracy_grid");
    const auto& theory = res.grids.at("theory_grid");

    double worst = 0.0, worst_exact = 0.0;
    std::size_t wi = 0, wj = 0, over = 0;
    for (std::size_t i = 0; i < sim.rows.size(); ++i)
        for (std::size_t j = 0; j < sim.cols.size(); ++j) {
            const double d = std::abs(sim.value[i][j] - theory.value[i][j]);
            over += d > 0.02;
            if (d > worst) {
                worst = d;
                wi = i;
                wj = j;
            }
            const double e = exact_star_accuracy(cfg.degree_law, sim.rows[i], sim.cols[j], cfg.r_nb);
            worst_exact = std::max(worst_exact, std::abs(sim.value[i][j] - e));
        }
    report(1, "analytic-simulation agreement", worst <= 0.02,
           "max |analytic - simulated| = " + fmt(worst) + " at (beta=" + fmt(sim.rows[wi], 1) +
               ", phi=" + fmt(sim.cols[wj], 1) + "), " + std::to_string(over) +
               " cells above 0.02; simulated vs exact chain max |diff| = " + fmt(worst_exact));

    auto cell = [&](double beta, double phi) {
        for (std::size_t i = 0; i < sim.rows.size(); ++i)
            for (std::size_t j = 0; j < sim.cols.size(); ++j)
                if (std::abs(sim.rows[i] - beta) < 1e-9 && std::abs(sim.cols[j] - phi) < 1e-9)
                    return sim.value[i][j];
        throw std::runtime_error("grid cell missing");
    };
    const double hard = cell(0.9, 0.1), easy = cell(0.1, 0.9), mean = sim.mean();
    report(2, "experiment 1 corner values", hard >= 0.50 && hard <= 0.62 && easy >= 0.97 && within(mean, 0.90, 0.03),
           "(0.9,0.1) = " + fmt(hard) + " in [0.50,0.62]; (0.1,0.9) = " + fmt(easy) + " >= 0.97; mean = " +
               fmt(mean) + " in 0.90 +- 0.03");

    const double violations = metric(res, "cx_recall_violations"), cx = metric(res, "cx_egos");
    report(3, "perfect Cx recall", violations == 0.0 && cx > 0.0,
           std::to_string(static_cast<long>(violations)) + " misclassified of " + std::to_string(static_cast<long>(cx)) +
               " Cx egos");
}

struct SyncResults {
    ExperimentResult exp2, exp4;
};

SyncResults criteria_4_5_7_8(const fs::path& out, unsigned jobs) {
    SyncResults s;
    auto cfg2 = base(out, 2, jobs);
    progress("experiment 2");
    s.exp2 = run_experiment(cfg2);
    const double llh = metric(s.exp2, "llh_mean"), forest = metric(s.exp2, "forest_mean");
    const double llh_min = metric(s.exp2, "llh_min"), forest_min = metric(s.exp2, "forest_min");
    report(4, "experiment 2 grid means",
           within(llh, 0.87, 0.05) && within(forest, 0.82, 0.05) && llh_min >= 0.33 && forest_min >= 0.33,
           "likelihood mean = " + fmt(llh) + " in 0.87 +- 0.05; forest mean = " + fmt(forest) +
               " in 0.82 +- 0.05; cell minima " + fmt(llh_min) + ", " + fmt(forest_min) + " >= 0.33 (" +
               std::to_string(cfg2.realisations) + " realisations)");

    auto cfg3 = base(out, 3, jobs);
    progress("experiment 3");
    const auto exp3 = run_experiment(cfg3);
    const double llh3 = metric(exp3, "llh_mean");
    const double f_low = metric(exp3, "forest_first_beta_row"), l_low = metric(exp3, "llh_first_beta_row");
    report(5, "experiment 3 grid means", within(llh3, 0.69, 0.05) && f_low > l_low,
           "likelihood mean = " + fmt(llh3) + " in 0.69 +- 0.05; beta=0.1: forest " + fmt(f_low) +
               " > likelihood " + fmt(l_low));

    auto cfg4 = base(out, 4, jobs);
    progress("experiment 4");
    s.exp4 = run_experiment(cfg4);

    const double f7 = metric(s.exp2, "top3.time_since_first_infected_neighbour");
    const double f8 = metric(s.exp2, "top3.time_since_last_infected_neighbour");
    const double deg2 = metric(s.exp2, "top3.degree"), deg4 = metric(s.exp4, "top3.degree");
    report(7, "feature importance", f7 >= 0.6 && f8 >= 0.6 && deg4 > deg2,
           "experiment 2 top-3 frequency f7 = " + fmt(f7, 3) + ", f8 = " + fmt(f8, 3) +
               " (>= 0.6 each); degree " + fmt(deg4, 3) + " (experiment 4) > " + fmt(deg2, 3) + " (experiment 2)");

    const double b4 = metric(s.exp2, "subset_best_4"), b8 = metric(s.exp2, "subset_best_8");
    report(8, "subset plateau", b4 >= b8 - 0.02,
           "best size-4 accuracy " + fmt(b4) + " >= best size-8 accuracy " + fmt(b8) + " - 0.02");
    return s;
}

void criterion_6(const fs::path& out, unsigned jobs) {
    auto cfg = base(out, 2, jobs);
    cfg.out_dir = out / "networks";
    progress("network comparison");
    const auto rows = compare_networks(cfg, matched_networks(1000));
    double worst = 0.0;
    std::string where;
    std::ostringstream means;
    const std::array<std::pair<const char*, double NetworkSummary::*>, 4> methods{{
        {"llh-known", &NetworkSummary::llh_known},
        {"forest-known", &NetworkSummary::forest_known},
        {"llh-est", &NetworkSummary::llh_estimated},
        {"forest-est", &NetworkSummary::forest_estimated},
    }};
    for (const auto& [name, field] : methods) {
        for (std::size_t a = 0; a < rows.size(); ++a)
            for (std::size_t b = a + 1; b < rows.size(); ++b) {
                const double d = std::abs(rows[a].*field - rows[b].*field);
                if (d > worst) {
                    worst = d;
                    where = std::string(name) + " " + rows[a].network + "/" + rows[b].network;
                }
            }
    }
    for (const auto& r : rows)
        means << ' ' << r.network << '(' << fmt(r.llh_known, 3) << ',' << fmt(r.forest_known, 3) << ','
              << fmt(r.llh_estimated, 3) << ',' << fmt(r.forest_estimated, 3) << ')';
    report(6, "network robustness", rows.size() == 4 && worst <= 0.05,
           "max pairwise difference " + fmt(worst) + " (" + where + ") <= 0.05; means" + means.str());
}

void criterion_9(const ExperimentResult& exp4) {
    const double mean = metric(exp4, "mean"), cv = metric(exp4, "waiting_cv"), rho = metric(exp4, "sweep_spearman");
    report(9, "experiment 4", within(mean, 0.72, 0.07) && cv > 1.0 && rho < 0.0,
           "forest mean = " + fmt(mean) + " in 0.72 +- 0.07; waiting-time CV = " + fmt(cv) +
               " > 1; Spearman(filter quantile, Sm/Cx accuracy) = " + fmt(rho, 3) + " < 0");
}

void criterion_10(const fs::path& out, unsigned jobs) {
    auto cfg = base(out, 5, jobs);
    cfg.model = out / "exp4" / "forest.json";
    progress("experiment 5");
    const auto res = run_experiment(cfg);
    const bool files = fs::exists(cfg.out_dir / "counts_table.csv") && fs::exists(cfg.out_dir / "decile_grid.csv");
    double forest_total = 0.0;
    for (auto m : kMechanisms)
        forest_total += metric(res, "forest_" + std::string(to_string(m)));
    const double classified = metric(res, "classified");
    const bool consistent = metric(res, "consistent") == 1.0;
    report(10, "experiment 5 pipeline integrity", files && consistent && classified > 0 && forest_total == classified,
           std::string("counts table and decile grid ") + (files ? "written" : "missing") + "; " +
               std::to_string(static_cast<long>(classified)) + " adoptions classified; classify_corpus counts " +
               (consistent ? "equal" : "differ from") + " evaluate counts");
}

// ---------------------------------------------------------------- properties

std::vector<CascadeRecord> property_cascades() {
    std::vector<CascadeRecord> out;
    auto g = std::make_shared<const Graph>(generate(ErSpec{1000, 0.004}, 11));
    const std::array<std::pair<double, double>, 4> cells{{{0.1, 0.1}, {0.5, 0.5}, {0.9, 0.3}, {0.3, 0.9}}};
    for (std::size_t c = 0; c < cells.size(); ++c) {
        Rng rng = make_rng(12, {c});
        std::vector<NodeAssignment> a;
        for (NodeId v = 0; v < g->n_nodes(); ++v)
            a.push_back(bernoulli(rng, 0.5) ? NodeAssignment::simple(cells[c].first)
                                            : NodeAssignment::complex(cells[c].second));
        out.push_back(simulate_network(g, std::move(a), 0.005, 1.0, 100000, derive_seed(13, {c})));
    }
    return out;
}

void criterion_11(double elapsed_before) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> failed;
    const auto cascades = property_cascades();

    std::size_t adopters = 0, cx = 0;
    double worst_additivity = 0.0;
    bool identities = true, f8 = true, monotone = true;
    for (const auto& c : cascades) {
        for (std::size_t t = 1; t < c.infected_per_step.size(); ++t)
            monotone = monotone && c.infected_per_step[t] >= c.infected_per_step[t - 1];
        for (NodeId v = 0; v < c.nodes.size(); ++v) {
            auto obs = observation_from_cascade(c, v);
            if (!obs || !obs->classifiable())
                continue;
            ++adopters;
            const auto f = extract(*obs);
            identities = identities && std::abs(f[kProportionInfected] * f[kDegree] - f[kInfectedNeighbours]) < 1e-9 &&
                         std::abs(f[kSumStimuli] - f[kMeanStimuli] * f[kDegree]) < 1e-9 * std::max(1.0, f[kSumStimuli]);
            if (obs->true_label == Mechanism::Cx) {
                ++cx;
                f8 = f8 && f[kTimeSinceLast] == 1.0;
            }
            const ModelParams p{0.5, 0.3, 0.005};
            const auto counts = infected_counts(*obs);
            for (auto s : {Scenario::SimpleBySimple, Scenario::ComplexBySpontaneous}) {
                double naive = 0.0;
                for (std::size_t t = 0; t < counts.size(); ++t)
                    naive += step_loglik(t + 1 < counts.size() ? Transition::Stay : Transition::Adopt, counts[t],
                                         obs->degree(), s, p, true);
                const double fast = trajectory_loglik(*obs, s, p, true);
                if (std::isfinite(naive) || std::isfinite(fast))
                    worst_additivity =
                        std::max(worst_additivity, std::abs(naive - fast) / std::max(1.0, std::abs(naive)));
            }
        }
    }
    if (!(worst_additivity < 1e-9))
        failed.push_back("log-additivity (" + fmt(worst_additivity, 12) + ")");
    if (!identities)
        failed.push_back("feature identities");
    if (!f8 || cx == 0)
        failed.push_back("f8 = 1 for Cx");
    if (!monotone)
        failed.push_back("monotone epidemic curves");

    bool boundary = true;
    for (std::size_t k = 1; k <= 40; ++k)
        for (double phi : {0.1, 0.2, 0.25, 0.3, 0.5, 0.7, 0.9}) {
            const double level = threshold_level(k, phi);
            if (level != std::floor(level))
                continue;
            const auto n = static_cast<std::size_t>(level);
            const ModelParams p{std::nullopt, phi, 0.0};
            boundary = boundary && !threshold_reached(n, k, phi) &&
                       step_loglik(Transition::Adopt, n, k, Scenario::ComplexByComplex, p, false) == kNegInf &&
                       (n + 1 > k || threshold_reached(n + 1, k, phi));
        }
    if (!boundary)
        failed.push_back("threshold boundary");

    Dataset d;
    Rng rng = make_rng(21, {});
    for (std::size_t i = 0; i < 600; ++i) {
        FeatureVector x{};
        for (auto& v : x)
            v = uniform01(rng);
        const auto label = x[0] + 0.3 * x[1] > 0.9 ? Mechanism::Sm : (x[2] > 0.5 ? Mechanism::Cx : Mechanism::St);
        d.add(x, label, i + 1);
    }
    ForestConfig fc;
    fc.n_trees = 20;
    fc.seed = 5;
    const bool deterministic = to_json(train(d, fc)) == to_json(train(d, fc));
    if (!deterministic)
        failed.push_back("forest determinism");

    const double own = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double total = elapsed_before + own;
    if (total >= 1800.0)
        failed.push_back("suite runtime");
    std::string detail = "log-additivity, threshold boundary, feature identities, f8 = 1 for " + std::to_string(cx) +
                         " Cx of " + std::to_string(adopters) + " adopters, forest determinism, monotone curves";
    if (!failed.empty()) {
        detail += "; failed:";
        for (const auto& f : failed)
            detail += " " + f;
    }
    detail += "; properties " + fmt(own, 1) + " s, suite " + fmt(total / 60.0, 1) + " min < 30 min";
    report(11, "property suites", failed.empty(), detail);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string out = "acceptance_runs";
    unsigned jobs = default_jobs();
    app.add_option("--out", out, "Directory for experiment artifacts");
    app.add_option("--jobs", jobs, "Worker threads");
    CLI11_PARSE(app, argc, argv);

    std::size_t warnings = 0;
    set_warning_sink([&](const std::string&) { ++warnings; });
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir(out);
    fs::create_directories(dir);
    try {
        criteria_1_to_3(dir, jobs);
        auto s = criteria_4_5_7_8(dir, jobs);
        criterion_9(s.exp4);
        criterion_10(dir, jobs);
        criterion_6(dir, jobs);
        criterion_11(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    } catch (const std::exception& e) {
        std::printf("FAIL suite aborted: %s\n", e.what());
        return 2;
    }
    std::sort(verdicts.begin(), verdicts.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    std::size_t passed = 0;
    for (const auto& v : verdicts)
        passed += v.pass;
    std::printf("acceptance: %zu/%zu criteria pass (%zu simulation warnings)\n", passed, verdicts.size(), warnings);
    return passed == verdicts.size() ? 0 : 1;
}
