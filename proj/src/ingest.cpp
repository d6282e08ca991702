#include "contagion_lens/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

#include "json.hpp"

#include "contagion_lens/errors.hpp"
#include "contagion_lens/likelihood.hpp"
#include "contagion_lens/log.hpp"

namespace clens {

using nlohmann::json;

const std::set<std::string>& default_hashtags() {
    static const std::set<std::string> tags{"#GiletsJaunes", "#giletsjaunes", "#Giletsjaunes",
                                            "#GiletJaune",   "#Giletjaune",   "#giletjaune",
                                            "#giletsjaune",  "#Giletsjaune",  "#GJ"};
    return tags;
}

FollowGraph parse_follow_graph(std::istream& in, const std::string& source) {
    FollowGraph g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a) || a.front() == '#')
            continue;
        if (!(ss >> b) || (ss >> extra))
            throw ParseError(source, lineno, "expected 'ego followee'");
        g[a].push_back(b);
    }
    for (auto& [ego, followees] : g) {
        std::sort(followees.begin(), followees.end());
        followees.erase(std::unique(followees.begin(), followees.end()), followees.end());
    }
    return g;
}

FollowGraph load_follow_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    return parse_follow_graph(in, path.string());
}

namespace {

struct ActorPosts {
    std::vector<std::pair<double, bool>> posts; ///< (ts, matches)
};

void read_records(std::istream& in, const std::string& source, const std::set<std::string>& hashtags,
                  const std::unordered_set<std::string>& known, std::unordered_map<std::string, ActorPosts>& out,
                  Corpus& corpus) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::string actor;
        double ts = 0.0;
        bool match = false;
        try {
            auto j = json::parse(line);
            actor = j.at("actor").get<std::string>();
            ts = j.at("ts").get<double>();
            for (const auto& h : j.at("hashtags"))
                if (hashtags.count(h.get<std::string>()))
                    match = true;
        } catch (const json::exception& e) {
            throw ParseError(source, lineno, e.what());
        }
        ++corpus.n_records;
        if (!known.count(actor)) {
            ++corpus.unknown_actors;
            continue;
        }
        out[actor].posts.emplace_back(ts, match);
    }
}

Corpus assemble(std::unordered_map<std::string, ActorPosts>& posts, const FollowGraph& follow, Corpus corpus) {
    for (auto& [actor, p] : posts)
        std::stable_sort(p.posts.begin(), p.posts.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [ego, followees] : follow) {
        EgoStream s;
        s.ego = ego;
        if (auto it = posts.find(ego); it != posts.end())
            for (auto [ts, match] : it->second.posts)
                if (match) {
                    s.adoption_ts = ts;
                    break;
                }
        if (s.adoption_ts) {
            for (const auto& f : followees) {
                auto it = posts.find(f);
                if (it == posts.end())
                    continue;
                for (auto [ts, match] : it->second.posts) {
                    if (ts >= *s.adoption_ts)
                        break;
                    s.followee_posts.push_back({f, ts, match});
                }
            }
            std::stable_sort(s.followee_posts.begin(), s.followee_posts.end(),
                             [](const auto& a, const auto& b) { return a.ts < b.ts; });
        }
        corpus.streams.push_back(std::move(s));
    }
    return corpus;
}

std::unordered_set<std::string> known_actors(const FollowGraph& follow) {
    std::unordered_set<std::string> known;
    for (const auto& [ego, followees] : follow) {
        known.insert(ego);
        known.insert(followees.begin(), followees.end());
    }
    return known;
}

} // namespace

Corpus parse_corpus(std::istream& in, const std::string& source, const std::set<std::string>& hashtags,
                    const FollowGraph& follow) {
    Corpus corpus;
    std::unordered_map<std::string, ActorPosts> posts;
    read_records(in, source, hashtags, known_actors(follow), posts, corpus);
    return assemble(posts, follow, std::move(corpus));
}

Corpus load_corpus(const std::vector<std::filesystem::path>& paths, const std::set<std::string>& hashtags,
                   const FollowGraph& follow) {
    Corpus corpus;
    std::unordered_map<std::string, ActorPosts> posts;
    const auto known = known_actors(follow);
    for (const auto& p : paths) {
        std::ifstream in(p);
        if (!in)
            throw IoError("cannot read " + p.string());
        read_records(in, p.string(), hashtags, known, posts, corpus);
    }
    if (corpus.unknown_actors > 0)
        warn("load_corpus: skipped " + std::to_string(corpus.unknown_actors) + " records of unknown actors");
    return assemble(posts, follow, std::move(corpus));
}

std::vector<EgoObservation> build_observations(const Corpus& corpus, double window_days) {
    std::vector<EgoObservation> out;
    for (std::size_t i = 0; i < corpus.streams.size(); ++i)
        if (auto obs = observation_from_events(corpus.streams[i], window_days, i))
            out.push_back(std::move(*obs));
    return out;
}

double LogNormal::quantile(double u) const {
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    if (sigma <= 0.0)
        return std::exp(mu);
    return std::exp(mu + sigma * boost::math::quantile(boost::math::normal(), u));
}

LogNormal fit_lognormal(std::span<const double> values) {
    LogNormal ln;
    double s = 0.0, ss = 0.0;
    for (double v : values) {
        if (!(v > 0.0))
            throw ParameterError("fit_lognormal: values must be positive");
        s += std::log(v);
        ++ln.n;
    }
    if (ln.n == 0)
        throw ParameterError("fit_lognormal: no values");
    ln.mu = s / static_cast<double>(ln.n);
    for (double v : values) {
        double d = std::log(v) - ln.mu;
        ss += d * d;
    }
    ln.sigma = std::sqrt(ss / static_cast<double>(ln.n));
    return ln;
}

namespace {

template <class Map>
auto nearest_class(const Map& m, int c) {
    if (m.empty())
        throw ConfigError("parameter model has no degree classes");
    auto it = m.lower_bound(c);
    if (it == m.end())
        return std::prev(it);
    if (it->first == c || it == m.begin())
        return it;
    auto prev = std::prev(it);
    return c - prev->first <= it->first - c ? prev : it;
}

double band_u(Rng& rng, double q, double lo, double hi) {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
        throw ParameterError("sampling band must satisfy 0 <= lo < hi <= 1");
    return q * (lo + (hi - lo) * uniform01(rng));
}

} // namespace

double EmpiricalParamModel::beta_at(std::size_t degree, double u) const {
    const auto& ln = nearest_class(beta_by_class, degree_class(degree))->second;
    return std::clamp(ln.quantile(u), 1e-12, 1.0);
}

double EmpiricalParamModel::phi_at(double u) const {
    if (phi_samples.empty())
        throw ConfigError("parameter model has no phi samples");
    auto i = static_cast<std::size_t>(std::floor(u * static_cast<double>(phi_samples.size())));
    return phi_samples[std::min(i, phi_samples.size() - 1)];
}

double EmpiricalParamModel::sample_beta(std::size_t degree, Rng& rng, double band_lo, double band_hi) const {
    return beta_at(degree, band_u(rng, filter_quantile, band_lo, band_hi));
}

double EmpiricalParamModel::sample_phi(Rng& rng, double band_lo, double band_hi) const {
    return phi_at(band_u(rng, filter_quantile, band_lo, band_hi));
}

std::map<int, double> EmpiricalParamModel::activity_table(int max_class) const {
    std::map<int, double> out;
    for (int c = 0; c <= max_class; ++c)
        out[c] = nearest_class(activity_means, c)->second;
    return out;
}

EmpiricalParamModel reference_param_model() {
    EmpiricalParamModel m;
    for (int c = 0; c <= 12; ++c) {
        m.beta_by_class[c] = LogNormal{std::log(0.5) - 0.35 * c, 0.6, 0};
        m.activity_means[c] = std::min(1.0, 0.2 + 0.08 * c);
    }
    boost::math::beta_distribution<double> phi_law(2.0, 3.0);
    constexpr int kPhiSamples = 400;
    for (int i = 0; i < kPhiSamples; ++i)
        m.phi_samples.push_back(boost::math::quantile(phi_law, (i + 0.5) / kPhiSamples));
    return m;
}

EmpiricalParamModel fit_param_model(std::span<const EgoObservation> observations, double filter_quantile) {
    if (!(filter_quantile > 0.0 && filter_quantile <= 1.0))
        throw ParameterError("fit_param_model: filter_quantile must lie in (0,1]");
    EmpiricalParamModel m;
    m.filter_quantile = filter_quantile;
    std::map<int, std::vector<double>> betas;
    std::map<int, std::pair<double, std::size_t>> activity;
    for (const auto& obs : observations) {
        if (!obs.classifiable())
            continue;
        const auto f = extract(obs);
        const int c = degree_class(obs.degree());
        if (f[kSumStimuli] >= 1.0)
            betas[c].push_back(1.0 / f[kSumStimuli]);
        if (obs.last_stimulus_from_new_neighbour && f[kInfectedNeighbours] >= 1.0)
            m.phi_samples.push_back(f[kProportionInfected]);
        auto& [sum, n] = activity[c];
        sum += static_cast<double>(obs.adoption_time) / static_cast<double>(obs.degree());
        ++n;
    }
    if (betas.empty())
        throw ParameterError("fit_param_model: no observation with a stimulus");
    if (m.phi_samples.empty())
        throw ParameterError("fit_param_model: no adoption following a newly infected neighbour");

    constexpr std::size_t kMinClass = 10;
    std::vector<std::pair<int, std::vector<double>>> merged;
    std::vector<double> pending;
    for (auto& [c, v] : betas) {
        pending.insert(pending.end(), v.begin(), v.end());
        if (pending.size() >= kMinClass) {
            merged.emplace_back(c, std::move(pending));
            pending.clear();
        } else {
            warn("fit_param_model: degree class " + std::to_string(c) + " has " + std::to_string(pending.size()) +
                 " samples, merged into the next class");
        }
    }
    if (!pending.empty()) {
        if (merged.empty())
            merged.emplace_back(betas.rbegin()->first, std::move(pending));
        else
            merged.back().second.insert(merged.back().second.end(), pending.begin(), pending.end());
    }
    for (auto& [c, v] : merged)
        m.beta_by_class[c] = fit_lognormal(v);

    std::sort(m.phi_samples.begin(), m.phi_samples.end());
    double top = 0.0;
    for (auto& [c, sn] : activity)
        top = std::max(top, sn.first / static_cast<double>(sn.second));
    for (auto& [c, sn] : activity)
        m.activity_means[c] = top > 0.0 ? sn.first / static_cast<double>(sn.second) / top : 1.0;
    return m;
}

std::string to_json(const EmpiricalParamModel& model) {
    json j;
    j["format"] = "contagion_lens.param_model";
    j["version"] = 1;
    j["filter_quantile"] = model.filter_quantile;
    json beta = json::array();
    for (const auto& [c, ln] : model.beta_by_class)
        beta.push_back({{"class", c}, {"mu", ln.mu}, {"sigma", ln.sigma}, {"n", ln.n}});
    j["beta_by_class"] = beta;
    j["phi_samples"] = model.phi_samples;
    json act = json::array();
    for (const auto& [c, a] : model.activity_means)
        act.push_back({{"class", c}, {"mean", a}});
    j["activity_means"] = act;
    return j.dump(1);
}

EmpiricalParamModel param_model_from_json(const std::string& text, const std::string& source) {
    try {
        auto j = json::parse(text);
        if (j.at("format") != "contagion_lens.param_model" || j.at("version") != 1)
            throw ParseError(source, 1, "not a version-1 parameter model");
        EmpiricalParamModel m;
        m.filter_quantile = j.at("filter_quantile").get<double>();
        for (const auto& b : j.at("beta_by_class"))
            m.beta_by_class[b.at("class").get<int>()] =
                LogNormal{b.at("mu").get<double>(), b.at("sigma").get<double>(), b.at("n").get<std::size_t>()};
        m.phi_samples = j.at("phi_samples").get<std::vector<double>>();
        std::sort(m.phi_samples.begin(), m.phi_samples.end());
        for (const auto& a : j.at("activity_means"))
            m.activity_means[a.at("class").get<int>()] = a.at("mean").get<double>();
        if (m.beta_by_class.empty() || m.phi_samples.empty() || m.activity_means.empty())
            throw ParseError(source, 1, "parameter model has an empty distribution");
        return m;
    } catch (const json::exception& e) {
        throw ParseError(source, 1, e.what());
    }
}

void save_param_model(const EmpiricalParamModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << to_json(model) << '\n';
}

EmpiricalParamModel load_param_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return param_model_from_json(ss.str(), path.string());
}

std::vector<std::size_t> decile_index(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(values.size());
    std::vector<std::size_t> out;
    out.reserve(values.size());
    for (double v : values) {
        auto smaller = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin());
        out.push_back(std::min<std::size_t>(9, static_cast<std::size_t>(smaller * 10.0 / n)));
    }
    return out;
}

Mechanism DecileCell::dominant() const noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (counts[i] > counts[best])
            best = i;
    return static_cast<Mechanism>(best);
}

CorpusClassification classify_corpus(const ForestModel& model, std::span<const EgoObservation> observations) {
    CorpusClassification out;
    std::vector<EgoObservation> usable;
    for (std::size_t i = 0; i < observations.size(); ++i)
        if (observations[i].classifiable()) {
            out.rows.push_back(i);
            usable.push_back(observations[i]);
        }
    if (usable.empty())
        return out;
    out.r_hat = estimate_r(usable).literal;
    std::vector<double> betas, phis;
    std::vector<std::size_t> in_grid;
    for (std::size_t j = 0; j < usable.size(); ++j) {
        const auto f = extract(usable[j]);
        auto p = model.predict(f);
        ++out.forest_counts[index_of(p.label)];
        ++out.likelihood_counts[index_of(classify_unknown(usable[j], out.r_hat).predicted)];
        out.predictions.push_back(p);
        if (f[kSumStimuli] >= 1.0) {
            betas.push_back(1.0 / f[kSumStimuli]);
            phis.push_back(f[kProportionInfected]);
            in_grid.push_back(j);
        } else {
            ++out.outside_grid;
        }
    }
    const auto bd = decile_index(betas), pd = decile_index(phis);
    for (std::size_t g = 0; g < in_grid.size(); ++g) {
        const auto& p = out.predictions[in_grid[g]];
        auto& cell = out.deciles[bd[g]][pd[g]];
        ++cell.counts[index_of(p.label)];
        cell.certainty_sum += p.certainty;
    }
    return out;
}

void write_counts_table(const CorpusClassification& c, std::ostream& out) {
    out << ",Sm,Cx,St\n";
    out << "Random forest," << c.forest_counts[0] << ',' << c.forest_counts[1] << ',' << c.forest_counts[2] << '\n';
    out << "Likelihood," << c.likelihood_counts[0] << ',' << c.likelihood_counts[1] << ','
        << c.likelihood_counts[2] << '\n';
}

void write_decile_grid(const CorpusClassification& c, std::ostream& out) {
    out << "beta_decile,phi_decile,n,n_Sm,n_Cx,n_St,dominant,mean_certainty\n";
    for (std::size_t b = 0; b < 10; ++b)
        for (std::size_t p = 0; p < 10; ++p) {
            const auto& cell = c.deciles[b][p];
            out << b + 1 << ',' << p + 1 << ',' << cell.n() << ',' << cell.counts[0] << ',' << cell.counts[1] << ','
                << cell.counts[2] << ',' << (cell.n() ? to_string(cell.dominant()) : "") << ','
                << cell.mean_certainty() << '\n';
        }
}

void write_fixture_corpus(const TemporalCascadeRecord& c, std::ostream& corpus, std::ostream& follow,
                          const FixtureOptions& options) {
    const double dt = options.span_days * 86400.0 / static_cast<double>(c.posts.size() + 1);
    for (std::size_t s = 0; s < c.posts.size(); ++s) {
        json rec{{"actor", "u" + std::to_string(c.posts[s].actor)},
                 {"ts", options.start_ts + dt * static_cast<double>(s + 1)},
                 {"hashtags", c.posts[s].hashtag ? json::array({options.hashtag}) : json::array()}};
        corpus << rec.dump() << '\n';
    }
    follow << "# ego followee\n";
    const auto& g = *c.graph;
    for (NodeId v = 0; v < g.n_nodes(); ++v)
        for (NodeId w : g.neighbours(v))
            follow << 'u' << v << " u" << w << '\n';
}

std::optional<NodeId> fixture_node(const std::string& actor) {
    if (actor.size() < 2 || actor[0] != 'u')
        return std::nullopt;
    NodeId v = 0;
    for (std::size_t i = 1; i < actor.size(); ++i) {
        if (actor[i] < '0' || actor[i] > '9')
            return std::nullopt;
        v = v * 10 + static_cast<NodeId>(actor[i] - '0');
    }
    return v;
}

} // namespace clens
