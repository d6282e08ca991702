#include "contagion_lens/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "contagion_lens/errors.hpp"

namespace clens {

const std::array<std::string_view, kFeatureCount> kFeatureNames{
    "degree",
    "proportion_infected_neighbours",
    "n_infected_neighbours",
    "sum_stimuli",
    "mean_stimuli_per_neighbour",
    "std_stimuli_per_neighbour",
    "time_since_first_infected_neighbour",
    "time_since_last_infected_neighbour",
};

namespace {

EgoObservation synchronous_view(std::uint64_t ego, Step t_a, std::span<const std::optional<Step>> times) {
    EgoObservation obs;
    obs.ego = ego;
    obs.adoption_time = t_a;
    obs.clock = Clock::Synchronous;
    obs.susceptible_steps = t_a;
    Step first = t_a;
    obs.neighbours.reserve(times.size());
    for (const auto& t : times) {
        NeighbourView nv;
        if (t && *t < t_a) {
            nv.infection_time = *t;
            nv.stimuli = t_a - *t;
            first = std::min(first, *t);
        }
        obs.neighbours.push_back(nv);
    }
    obs.exposure_steps = t_a - first;
    return obs;
}

} // namespace

std::optional<EgoObservation> observation_from_cascade(const CascadeRecord& c, NodeId node) {
    if (node >= c.nodes.size() || node == c.seed_node)
        return std::nullopt;
    const auto& outcome = c.nodes[node];
    if (!outcome.adoption_time)
        return std::nullopt;
    std::vector<std::optional<Step>> times;
    times.reserve(c.graph->degree(node));
    for (NodeId w : c.graph->neighbours(node))
        times.push_back(c.nodes[w].adoption_time);
    auto obs = synchronous_view(node, *outcome.adoption_time, times);
    obs.true_label = outcome.fired;
    return obs;
}

std::optional<EgoObservation> observation_from_star(const StarCascade& s) {
    if (!s.ego_adoption)
        return std::nullopt;
    auto obs = synchronous_view(0, *s.ego_adoption, s.neighbour_times);
    obs.true_label = s.fired;
    return obs;
}

EventTimeAccumulator::EventTimeAccumulator(std::size_t n_followees)
    : first_hashtag_(n_followees, -1), stimuli_(n_followees, 0), posted_(n_followees, 0) {}

void EventTimeAccumulator::post(std::size_t followee, bool hashtag) {
    ++clock_;
    posted_.at(followee) = 1;
    if (!hashtag)
        return;
    ++stimuli_[followee];
    last_new_ = first_hashtag_[followee] < 0;
    if (last_new_)
        first_hashtag_[followee] = clock_;
}

EgoObservation EventTimeAccumulator::finish(std::uint64_t ego) const {
    EgoObservation obs;
    obs.ego = ego;
    obs.clock = Clock::EventTime;
    obs.adoption_time = clock_;
    obs.last_stimulus_from_new_neighbour = last_new_;
    Step first = -1;
    for (std::size_t j = 0; j < posted_.size(); ++j) {
        if (!posted_[j])
            continue;
        NeighbourView nv;
        nv.stimuli = stimuli_[j];
        if (first_hashtag_[j] >= 0) {
            nv.infection_time = first_hashtag_[j];
            first = first < 0 ? first_hashtag_[j] : std::min(first, first_hashtag_[j]);
        }
        obs.neighbours.push_back(nv);
    }
    // Read as a synchronous trajectory the adoption lands at clock + 1.
    obs.susceptible_steps = clock_ + 1;
    obs.exposure_steps = first < 0 ? 0 : clock_ + 1 - first;
    return obs;
}

std::optional<EgoObservation> observation_from_events(const EgoStream& stream, std::optional<double> window_days,
                                                      std::uint64_t ego_id) {
    if (!stream.adoption_ts)
        return std::nullopt;
    const double t_a = *stream.adoption_ts;
    const double earliest = window_days ? t_a - *window_days * 86400.0 : -std::numeric_limits<double>::infinity();

    std::unordered_map<std::string_view, std::size_t> index;
    std::vector<std::pair<std::size_t, bool>> kept;
    for (const auto& ev : stream.followee_posts) {
        if (ev.ts >= t_a || ev.ts < earliest)
            continue;
        auto [it, fresh] = index.emplace(ev.actor, index.size());
        kept.emplace_back(it->second, ev.hashtag);
    }
    EventTimeAccumulator acc(index.size());
    for (auto [j, h] : kept)
        acc.post(j, h);
    return acc.finish(ego_id);
}

std::vector<EgoObservation> observations_from_temporal(const TemporalCascadeRecord& c) {
    const auto& g = *c.graph;
    const auto adopters = c.observed_adopters();
    std::vector<std::int64_t> slot(g.n_nodes(), -1);
    std::vector<EventTimeAccumulator> acc;
    acc.reserve(adopters.size());
    for (std::size_t i = 0; i < adopters.size(); ++i) {
        slot[adopters[i]] = static_cast<std::int64_t>(i);
        acc.emplace_back(g.degree(adopters[i]));
    }
    for (std::size_t idx = 0; idx < c.posts.size(); ++idx) {
        const Step s = static_cast<Step>(idx) + 1;
        const auto [u, hashtag] = c.posts[idx];
        for (NodeId v : g.neighbours(u)) {
            if (slot[v] < 0 || *c.nodes[v].detected_time <= s)
                continue;
            auto nb = g.neighbours(v);
            auto pos = static_cast<std::size_t>(std::lower_bound(nb.begin(), nb.end(), u) - nb.begin());
            acc[static_cast<std::size_t>(slot[v])].post(pos, hashtag);
        }
    }
    std::vector<EgoObservation> out;
    out.reserve(adopters.size());
    for (std::size_t i = 0; i < adopters.size(); ++i) {
        auto obs = acc[i].finish(adopters[i]);
        obs.true_label = c.nodes[adopters[i]].fired;
        out.push_back(std::move(obs));
    }
    return out;
}

FeatureVector extract(const EgoObservation& obs, const FeatureOptions& options) {
    const std::size_t k = obs.degree();
    if (k == 0)
        throw ParameterError("extract: observation has degree 0");
    double n_inf = 0.0, sum = 0.0;
    Step first = std::numeric_limits<Step>::max(), last = std::numeric_limits<Step>::min();
    for (const auto& nb : obs.neighbours) {
        sum += static_cast<double>(nb.stimuli);
        if (nb.infection_time) {
            n_inf += 1.0;
            first = std::min(first, *nb.infection_time);
            last = std::max(last, *nb.infection_time);
        }
    }
    double pool = options.stimulus_stats_over_all_neighbours ? static_cast<double>(k) : n_inf;
    double mean = 0.0, sd = 0.0;
    if (pool > 0.0) {
        mean = sum / pool;
        double ss = 0.0;
        for (const auto& nb : obs.neighbours) {
            if (!options.stimulus_stats_over_all_neighbours && !nb.infection_time)
                continue;
            double d = static_cast<double>(nb.stimuli) - mean;
            ss += d * d;
        }
        sd = std::sqrt(ss / pool);
    }
    FeatureVector f{};
    f[kDegree] = static_cast<double>(k);
    f[kProportionInfected] = n_inf / static_cast<double>(k);
    f[kInfectedNeighbours] = n_inf;
    f[kSumStimuli] = sum;
    f[kMeanStimuli] = mean;
    f[kStdStimuli] = sd;
    f[kTimeSinceFirst] = n_inf > 0 ? static_cast<double>(obs.adoption_time - first) : kNoInfectedNeighbour;
    f[kTimeSinceLast] = n_inf > 0 ? static_cast<double>(obs.adoption_time - last) : kNoInfectedNeighbour;
    return f;
}

Step trajectory_adoption_step(const EgoObservation& obs) noexcept {
    return obs.clock == Clock::EventTime ? obs.adoption_time + 1 : obs.adoption_time;
}

std::vector<std::size_t> infected_counts(const EgoObservation& obs) {
    const Step t_adopt = trajectory_adoption_step(obs);
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max<Step>(t_adopt, 0)), 0);
    for (const auto& nb : obs.neighbours)
        if (nb.infection_time && *nb.infection_time < t_adopt)
            ++counts[static_cast<std::size_t>(std::max<Step>(*nb.infection_time, 0))];
    for (std::size_t t = 1; t < counts.size(); ++t)
        counts[t] += counts[t - 1];
    return counts;
}

namespace {

std::string join_neighbours(const EgoObservation& obs, bool times) {
    std::string out;
    for (std::size_t j = 0; j < obs.neighbours.size(); ++j) {
        if (j)
            out += ';';
        const auto& nb = obs.neighbours[j];
        if (times)
            out += nb.infection_time ? std::to_string(*nb.infection_time) : "-";
        else
            out += std::to_string(nb.stimuli);
    }
    return out;
}

std::string fmt(double x) {
    std::ostringstream ss;
    ss.precision(17);
    ss << x;
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void write_observations_csv(std::span<const EgoObservation> observations, std::ostream& out,
                            const FeatureOptions& options) {
    out << "ego";
    for (auto name : kFeatureNames)
        out << ',' << name;
    out << ",label,beta_hat,phi_hat,clock,adoption_time,susceptible_steps,exposure_steps,last_new,"
           "neighbour_times,neighbour_stimuli,provenance\n";
    for (const auto& obs : observations) {
        out << obs.ego;
        if (obs.classifiable()) {
            auto f = extract(obs, options);
            for (double x : f)
                out << ',' << fmt(x);
            out << ',' << (obs.true_label ? to_string(*obs.true_label) : "");
            out << ',' << (f[kSumStimuli] >= 1.0 ? fmt(1.0 / f[kSumStimuli]) : "");
            out << ',' << fmt(f[kProportionInfected]);
        } else {
            for (std::size_t i = 0; i < kFeatureCount; ++i)
                out << ',';
            out << ',' << (obs.true_label ? to_string(*obs.true_label) : "") << ",,";
        }
        out << ',' << (obs.clock == Clock::Synchronous ? "sync" : "event") << ',' << obs.adoption_time << ','
            << obs.susceptible_steps << ',' << obs.exposure_steps << ',' << (obs.last_stimulus_from_new_neighbour ? 1 : 0)
            << ',' << join_neighbours(obs, true) << ',' << join_neighbours(obs, false) << ',' << obs.provenance << '\n';
    }
}

std::vector<ObservationRow> read_observations_csv(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line))
        throw ParseError(source, 1, "missing header");
    ++lineno;
    auto header = split(line, ',');
    auto column = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        return std::nullopt;
    };
    auto need = [&](std::string_view name) {
        auto c = column(name);
        if (!c)
            throw ParseError(source, 1, "missing column " + std::string(name));
        return *c;
    };
    const auto c_ego = column("ego");
    const auto c_label = need("label");
    const auto c_beta = column("beta_hat");
    const auto c_phi = column("phi_hat");
    const auto c_clock = need("clock");
    const auto c_ta = need("adoption_time");
    const auto c_sus = column("susceptible_steps");
    const auto c_exp = column("exposure_steps");
    const auto c_new = column("last_new");
    const auto c_times = need("neighbour_times");
    const auto c_stim = need("neighbour_stimuli");
    const auto c_prov = column("provenance");

    auto to_int = [&](const std::string& s) -> Step {
        Step v{};
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ParseError(source, lineno, "expected integer, got '" + s + "'");
        return v;
    };
    auto to_double = [&](const std::string& s) -> std::optional<double> {
        if (s.empty())
            return std::nullopt;
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size())
                throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ParseError(source, lineno, "expected number, got '" + s + "'");
        }
    };

    std::vector<ObservationRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw ParseError(source, lineno, "expected " + std::to_string(header.size()) + " cells");
        ObservationRow row;
        auto& obs = row.observation;
        if (c_ego)
            obs.ego = static_cast<std::uint64_t>(to_int(cells[*c_ego]));
        if (!cells[c_label].empty()) {
            obs.true_label = parse_mechanism(cells[c_label]);
            if (!obs.true_label)
                throw ParseError(source, lineno, "unknown label '" + cells[c_label] + "'");
        }
        if (cells[c_clock] == "sync")
            obs.clock = Clock::Synchronous;
        else if (cells[c_clock] == "event")
            obs.clock = Clock::EventTime;
        else
            throw ParseError(source, lineno, "clock must be sync or event");
        obs.adoption_time = to_int(cells[c_ta]);
        if (c_new)
            obs.last_stimulus_from_new_neighbour = cells[*c_new] == "1";
        if (c_prov)
            obs.provenance = static_cast<std::uint64_t>(to_int(cells[*c_prov]));
        auto times = cells[c_times].empty() ? std::vector<std::string>{} : split(cells[c_times], ';');
        auto stim = cells[c_stim].empty() ? std::vector<std::string>{} : split(cells[c_stim], ';');
        if (times.size() != stim.size())
            throw ParseError(source, lineno, "neighbour_times and neighbour_stimuli differ in length");
        for (std::size_t j = 0; j < times.size(); ++j) {
            NeighbourView nv;
            if (times[j] != "-")
                nv.infection_time = to_int(times[j]);
            nv.stimuli = to_int(stim[j]);
            obs.neighbours.push_back(nv);
        }
        obs.susceptible_steps = c_sus ? to_int(cells[*c_sus]) : trajectory_adoption_step(obs);
        obs.exposure_steps = c_exp ? to_int(cells[*c_exp]) : 0;
        if (c_beta)
            row.beta_hat = to_double(cells[*c_beta]);
        if (c_phi)
            row.phi_hat = to_double(cells[*c_phi]);
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace clens
