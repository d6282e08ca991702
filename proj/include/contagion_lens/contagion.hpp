#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "contagion_lens/graph.hpp"
#include "contagion_lens/mechanism.hpp"
#include "contagion_lens/rng.hpp"

namespace clens {

using Step = std::int64_t;

/// Per-node hidden ground truth: Sm with beta, or Cx with phi.
class NodeAssignment {
public:
    static NodeAssignment simple(double beta);
    static NodeAssignment complex(double phi);

    Mechanism mechanism() const noexcept { return mechanism_; }
    double parameter() const noexcept { return parameter_; }
    /// Throws ConfigError unless the assignment is Sm.
    double beta() const;
    /// Throws ConfigError unless the assignment is Cx.
    double phi() const;

private:
    NodeAssignment(Mechanism m, double p) : mechanism_(m), parameter_(p) {}
    Mechanism mechanism_;
    double parameter_;
};

/// phi * k with products that land within 1e-9 of an integer snapped onto it,
/// so that 0.7 * 10 counts as exactly 7.
double threshold_level(std::size_t k, double phi) noexcept;

/// Heaviside condition of the threshold model: n_inf - phi * k > 0 (strict).
bool threshold_reached(std::size_t n_inf, std::size_t k, double phi) noexcept;

/// Smallest number of infected neighbours for which threshold_reached holds.
/// May exceed k when phi = 1.
std::size_t required_infected(std::size_t k, double phi) noexcept;

struct NodeOutcome {
    std::optional<Step> adoption_time;
    std::optional<Mechanism> fired; ///< empty for the cascade seed and non-adopters
};

/// Event log of one synchronous cascade.
struct CascadeRecord {
    std::shared_ptr<const Graph> graph;
    std::string graph_ref;
    std::vector<NodeAssignment> assignments;
    double r = 0.0;
    NodeId seed_node = 0;
    std::uint64_t rng_seed = 0;
    Step horizon = 0;              ///< last simulated step
    bool complete = true;          ///< false when the step cap ended the run early
    std::vector<NodeOutcome> nodes;
    std::vector<std::size_t> infected_per_step; ///< index = step

    std::size_t n_adopters() const noexcept { return infected_per_step.empty() ? 0 : infected_per_step.back(); }
};

/// Synchronous cascade on a network. One uniformly random seed is infected at
/// t = 0. Every step, each susceptible node first tries spontaneous adoption
/// with probability r, then its assigned mechanism against the neighbour
/// states of the previous step. Stops when the infected fraction reaches
/// stop_fraction or at step t_max.
CascadeRecord simulate_network(std::shared_ptr<const Graph> g, std::vector<NodeAssignment> assignments,
                               double r, double stop_fraction, Step t_max, std::uint64_t seed);

/// Ego-network trajectory of one isolated star: neighbours adopt
/// spontaneously with per-step probability r_nb, the ego only via its
/// assigned mechanism.
struct StarCascade {
    NodeAssignment assignment;
    std::vector<std::optional<Step>> neighbour_times; ///< infection step, empty if after the horizon
    std::optional<Step> ego_adoption;
    std::optional<Mechanism> fired;
    Step horizon = 0;

    std::size_t degree() const noexcept { return neighbour_times.size(); }
};

StarCascade simulate_star(std::size_t k, const NodeAssignment& ego, double r_nb, Step horizon, Rng& rng);

/// One ensemble of stars per grid entry; degrees are drawn from the
/// zero-truncated Binomial(trials, p). Entry i of the grid uses streams
/// derived from (seed, i, ego index).
std::vector<StarCascade> simulate_star_ensemble(const StarEnsembleSpec& degree_law,
                                                std::span<const NodeAssignment> ego_grid, double r_nb,
                                                Step horizon, std::size_t n_egos_per_cell, std::uint64_t seed);

/// (step, infected count) for every simulated step.
std::vector<std::pair<Step, std::size_t>> epidemic_curve(const CascadeRecord& c);

/// Line-oriented JSON: a header object, then one object per adopter.
void write_cascade_jsonl(const CascadeRecord& c, std::ostream& out);
/// Reads the format above; graph must be supplied by the caller.
CascadeRecord read_cascade_jsonl(std::istream& in, std::shared_ptr<const Graph> g, const std::string& source);

} // namespace clens
