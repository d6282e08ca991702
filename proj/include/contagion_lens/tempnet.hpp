#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "contagion_lens/contagion.hpp"
#include "contagion_lens/graph.hpp"

namespace clens {

/// Logarithmic degree bins: 1 -> 0, 2 -> 1, 3-4 -> 2, 5-8 -> 3, ...
int degree_class(std::size_t k) noexcept;

struct ActivityTable {
    std::map<int, double> class_means; ///< degree class -> mean activity
    std::vector<double> activity;      ///< per node, in (0, 1] (or exactly 0 if set by hand)
};

/// a_i ~ Normal(mean of i's degree class, spread), non-positive draws
/// redrawn, values above 1 clipped to 1.
ActivityTable assign_activities(const Graph& g, const std::map<int, double>& degree_activity_means,
                                double spread, std::uint64_t seed);

struct TemporalNodeOutcome {
    std::optional<Step> aware_time;
    std::optional<Step> detected_time;
    std::optional<Mechanism> fired; ///< mechanism that made the node aware; empty for the seed
};

/// One post per event step; step s is posts[s - 1].
struct Post {
    NodeId actor;
    bool hashtag;
};

struct TemporalCascadeRecord {
    std::shared_ptr<const Graph> graph;
    std::vector<NodeAssignment> assignments;
    double r = 0.0;
    NodeId seed_node = 0;
    std::uint64_t rng_seed = 0;
    Step horizon = 0; ///< number of event steps executed
    bool complete = true;
    std::vector<TemporalNodeOutcome> nodes;
    std::vector<Post> posts;

    /// Nodes with a detected time other than the seed: the observable adopters.
    std::vector<NodeId> observed_adopters() const;
};

struct ActivityDrivenOptions {
    double r = 0.005;
    double stop_fraction = 0.9;
    Step max_steps = 0;                  ///< 0 selects 500 * n_nodes
    std::optional<NodeId> seed_node;     ///< uniformly random when empty
};

/// Asynchronous activity-driven cascade with susceptible, aware and detected
/// states. Each event step one node acts, chosen with probability
/// proportional to its activity:
///  - susceptible: adopts spontaneously with probability r, otherwise a
///    complex node adopts if its aware-or-detected neighbour fraction exceeds
///    phi; its post carries no hashtag;
///  - aware: becomes detected and posts the hashtag;
///  - detected: posts the hashtag.
/// A hashtag post stimulates every neighbour at once: susceptible simple
/// nodes adopt with probability beta per stimulus, complex nodes re-check
/// their threshold. Adoption means becoming aware. Runs until the
/// aware-or-detected fraction reaches stop_fraction.
TemporalCascadeRecord simulate_activity_driven(std::shared_ptr<const Graph> g, const ActivityTable& activities,
                                               std::vector<NodeAssignment> assignments,
                                               const ActivityDrivenOptions& options, std::uint64_t seed);

/// detected_time - aware_time for every node that has both.
std::vector<Step> waiting_times(const TemporalCascadeRecord& c);

} // namespace clens
