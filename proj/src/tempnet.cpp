#include "contagion_lens/tempnet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "contagion_lens/errors.hpp"

namespace clens {

int degree_class(std::size_t k) noexcept {
    int c = 0;
    std::size_t upper = 1;
    while (upper < k) {
        upper *= 2;
        ++c;
    }
    return c;
}

ActivityTable assign_activities(const Graph& g, const std::map<int, double>& degree_activity_means,
                                double spread, std::uint64_t seed) {
    if (!(spread >= 0.0) || !std::isfinite(spread))
        throw ParameterError("assign_activities: spread must be finite and >= 0");
    for (auto [cls, mean] : degree_activity_means)
        if (!(mean > 0.0))
            throw ConfigError("assign_activities: class " + std::to_string(cls) + " has non-positive mean");
    Rng rng{seed};
    ActivityTable table;
    table.class_means = degree_activity_means;
    table.activity.resize(g.n_nodes());
    for (NodeId v = 0; v < g.n_nodes(); ++v) {
        int cls = degree_class(g.degree(v));
        auto it = degree_activity_means.find(cls);
        if (it == degree_activity_means.end())
            throw ConfigError("assign_activities: degree class " + std::to_string(cls) + " (degree " +
                              std::to_string(g.degree(v)) + ") has no mean activity");
        double a = it->second;
        if (spread > 0.0) {
            std::normal_distribution<double> draw(it->second, spread);
            do {
                a = draw(rng);
            } while (a <= 0.0);
        }
        table.activity[v] = std::min(a, 1.0);
    }
    return table;
}

std::vector<NodeId> TemporalCascadeRecord::observed_adopters() const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < nodes.size(); ++v)
        if (v != seed_node && nodes[v].detected_time)
            out.push_back(v);
    return out;
}

TemporalCascadeRecord simulate_activity_driven(std::shared_ptr<const Graph> g, const ActivityTable& activities,
                                               std::vector<NodeAssignment> assignments,
                                               const ActivityDrivenOptions& options, std::uint64_t seed) {
    if (!g || g->n_nodes() == 0)
        throw ConfigError("simulate_activity_driven: empty graph");
    const std::size_t n = g->n_nodes();
    if (assignments.size() != n)
        throw ConfigError("simulate_activity_driven: assignments do not cover the graph");
    if (activities.activity.size() != n)
        throw ConfigError("simulate_activity_driven: activities do not cover the graph");
    if (!(options.r >= 0.0 && options.r <= 1.0))
        throw ParameterError("simulate_activity_driven: r must lie in [0,1]");
    if (!(options.stop_fraction > 0.0 && options.stop_fraction <= 1.0))
        throw ParameterError("simulate_activity_driven: stop_fraction must lie in (0,1]");
    double total = 0.0;
    for (double a : activities.activity) {
        if (!(a >= 0.0) || !std::isfinite(a))
            throw ConfigError("simulate_activity_driven: activities must be finite and >= 0");
        total += a;
    }
    if (total <= 0.0)
        throw ConfigError("simulate_activity_driven: all activities are zero");

    Rng rng{seed};
    TemporalCascadeRecord c;
    c.graph = g;
    c.assignments = std::move(assignments);
    c.r = options.r;
    c.rng_seed = seed;
    c.nodes.assign(n, {});

    enum : std::uint8_t { S, A, D };
    std::vector<std::uint8_t> state(n, S);
    std::vector<std::uint32_t> n_active_nb(n, 0);
    std::size_t reached = 0;

    auto make_aware = [&](NodeId v, Step s, std::optional<Mechanism> m) {
        state[v] = A;
        c.nodes[v].aware_time = s;
        c.nodes[v].fired = m;
        ++reached;
        for (NodeId w : g->neighbours(v))
            ++n_active_nb[w];
    };
    auto complex_ready = [&](NodeId v) {
        return threshold_reached(n_active_nb[v], g->degree(v), c.assignments[v].phi());
    };

    if (options.seed_node) {
        if (*options.seed_node >= n)
            throw ParameterError("simulate_activity_driven: seed node out of range");
        c.seed_node = *options.seed_node;
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        c.seed_node = static_cast<NodeId>(pick(rng));
    }
    make_aware(c.seed_node, 0, std::nullopt);

    const auto target = static_cast<std::size_t>(std::ceil(options.stop_fraction * static_cast<double>(n) - 1e-9));
    const Step max_steps = options.max_steps > 0 ? options.max_steps : static_cast<Step>(500 * n);
    std::discrete_distribution<std::size_t> select(activities.activity.begin(), activities.activity.end());

    Step s = 0;
    while (reached < target && s < max_steps) {
        ++s;
        const auto u = static_cast<NodeId>(select(rng));
        bool hashtag = false;
        if (state[u] == S) {
            if (bernoulli(rng, c.r))
                make_aware(u, s, Mechanism::St);
            else if (c.assignments[u].mechanism() == Mechanism::Cx && complex_ready(u))
                make_aware(u, s, Mechanism::Cx);
        } else {
            if (state[u] == A) {
                state[u] = D;
                c.nodes[u].detected_time = s;
            }
            hashtag = true;
        }
        c.posts.push_back({u, hashtag});
        if (!hashtag)
            continue;
        for (NodeId w : g->neighbours(u)) {
            if (state[w] != S)
                continue;
            const auto& a = c.assignments[w];
            if (a.mechanism() == Mechanism::Sm) {
                if (bernoulli(rng, a.beta()))
                    make_aware(w, s, Mechanism::Sm);
            } else if (complex_ready(w)) {
                make_aware(w, s, Mechanism::Cx);
            }
        }
    }
    c.horizon = s;
    c.complete = reached >= target;
    return c;
}

std::vector<Step> waiting_times(const TemporalCascadeRecord& c) {
    std::vector<Step> out;
    for (const auto& node : c.nodes)
        if (node.aware_time && node.detected_time)
            out.push_back(*node.detected_time - *node.aware_time);
    return out;
}

} // namespace clens
