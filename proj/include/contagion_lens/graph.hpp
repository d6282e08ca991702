#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "contagion_lens/rng.hpp"

namespace clens {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Undirected simple graph on nodes [0, n). Immutable once built.
class Graph {
public:
    Graph() = default;

    /// Builds from an arbitrary edge list; self-loops and repeated edges are
    /// dropped and counted.
    struct BuildStats {
        std::size_t self_loops = 0;
        std::size_t duplicates = 0;
    };
    static Graph from_edges(std::size_t n_nodes, std::span<const Edge> edges, BuildStats* stats = nullptr);

    std::size_t n_nodes() const noexcept { return adjacency_.size(); }
    std::size_t n_edges() const noexcept { return edges_.size(); }

    /// Sorted neighbour list.
    std::span<const NodeId> neighbours(NodeId v) const { return adjacency_[v]; }
    std::size_t degree(NodeId v) const { return adjacency_[v].size(); }
    bool has_edge(NodeId u, NodeId v) const;

    /// Canonical edge list, u < v, lexicographically sorted.
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    double mean_degree() const noexcept;
    bool is_connected() const;

private:
    std::vector<std::vector<NodeId>> adjacency_;
    std::vector<Edge> edges_;
};

struct ErSpec {
    std::size_t n = 1000;
    double p = 0.004;
};
struct BaSpec {
    std::size_t n = 1000;
    std::size_t m = 2;
};
struct WsSpec {
    std::size_t n = 1000;
    std::size_t k_ring = 4;
    double rewire_p = 0.1;
};
struct SbmSpec {
    std::vector<std::size_t> block_sizes;
    std::vector<std::vector<double>> block_p;
};
/// Disjoint stars; center degree ~ Binomial(trials, p) conditioned on >= 1.
struct StarEnsembleSpec {
    std::size_t n_egos = 1;
    std::size_t trials = 1000;
    double p = 0.004;
};
struct EdgeListSpec {
    std::filesystem::path path;
};

using ModelSpec = std::variant<ErSpec, BaSpec, WsSpec, SbmSpec, StarEnsembleSpec, EdgeListSpec>;

/// Throws ParameterError when the spec violates its invariants.
void validate(const ModelSpec& spec);
std::string model_name(const ModelSpec& spec);

/// Deterministic for fixed (spec, seed). Random models (ER, BA, WS, SBM)
/// return their largest connected component; star ensembles are returned
/// as generated; edge lists are loaded as-is.
Graph generate(const ModelSpec& spec, std::uint64_t seed);

/// Draws from Binomial(trials, p) conditioned on a nonzero outcome.
std::size_t sample_truncated_binomial(std::size_t trials, double p, Rng& rng);

/// Mean of Binomial(trials, p) conditioned on a nonzero outcome.
double truncated_binomial_mean(std::size_t trials, double p);

/// P(K = k | K >= 1) for K ~ Binomial(trials, p).
std::vector<double> truncated_binomial_pmf(std::size_t trials, double p, std::size_t k_max);

struct Component {
    Graph graph;
    std::vector<NodeId> original_id; ///< new id -> old id
};

/// Largest connected component, re-indexed preserving the original order.
/// Ties go to the component holding the smallest original id.
Component largest_connected_component(const Graph& g);

/// Grows a connected sample from one uniformly random node. The next node is
/// an unvisited neighbour of the most recently added node, chosen with
/// probability proportional to 1/degree; when that node has no unvisited
/// neighbours the walk restarts from a uniformly random included node that
/// still has some. Returns the subgraph induced by the sampled nodes.
Component degree_biased_subsample(const Graph& g, std::size_t target_n, std::uint64_t seed);

struct EdgeListLoad {
    Graph graph;
    std::vector<std::string> labels; ///< new id -> token in the file
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;
};

/// Whitespace-separated id pairs, one per line; blank and '#' lines ignored.
/// Tokens are remapped to contiguous ids in order of first appearance.
EdgeListLoad load_edge_list(const std::filesystem::path& path);
EdgeListLoad parse_edge_list(std::istream& in, const std::string& source);

/// Writes "# <header json>" followed by one "u v" line per edge.
void write_edge_list(const Graph& g, const std::filesystem::path& path, const std::string& header_json);

} // namespace clens
