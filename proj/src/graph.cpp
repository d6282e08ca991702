#include "contagion_lens/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "contagion_lens/errors.hpp"

namespace clens {

Graph Graph::from_edges(std::size_t n_nodes, std::span<const Edge> edges, BuildStats* stats) {
    Graph g;
    BuildStats local;
    g.edges_.reserve(edges.size());
    for (auto [u, v] : edges) {
        if (u >= n_nodes || v >= n_nodes)
            throw ParameterError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                 ") outside node range " + std::to_string(n_nodes));
        if (u == v) {
            ++local.self_loops;
            continue;
        }
        g.edges_.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(g.edges_.begin(), g.edges_.end());
    auto last = std::unique(g.edges_.begin(), g.edges_.end());
    local.duplicates = static_cast<std::size_t>(g.edges_.end() - last);
    g.edges_.erase(last, g.edges_.end());

    std::vector<std::size_t> deg(n_nodes, 0);
    for (auto [u, v] : g.edges_) {
        ++deg[u];
        ++deg[v];
    }
    g.adjacency_.resize(n_nodes);
    for (std::size_t v = 0; v < n_nodes; ++v)
        g.adjacency_[v].reserve(deg[v]);
    for (auto [u, v] : g.edges_) {
        g.adjacency_[u].push_back(v);
        g.adjacency_[v].push_back(u);
    }
    for (auto& nb : g.adjacency_)
        std::sort(nb.begin(), nb.end());
    if (stats)
        *stats = local;
    return g;
}

bool Graph::has_edge(NodeId u, NodeId v) const {
    const auto& nb = adjacency_.at(u);
    return std::binary_search(nb.begin(), nb.end(), v);
}

double Graph::mean_degree() const noexcept {
    return n_nodes() == 0 ? 0.0 : 2.0 * static_cast<double>(n_edges()) / static_cast<double>(n_nodes());
}

bool Graph::is_connected() const {
    if (n_nodes() == 0)
        return false;
    std::vector<char> seen(n_nodes(), 0);
    std::vector<NodeId> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : adjacency_[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
    }
    return count == n_nodes();
}

namespace {

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

struct Validator {
    void operator()(const ErSpec& s) const {
        if (s.n < 1)
            throw ParameterError("er: n must be >= 1");
        if (!is_probability(s.p))
            throw ParameterError("er: p must lie in [0,1]");
    }
    void operator()(const BaSpec& s) const {
        if (s.n < 1 || s.m < 1)
            throw ParameterError("ba: n and m must be >= 1");
        if (s.m >= s.n)
            throw ParameterError("ba: m must be smaller than n");
    }
    void operator()(const WsSpec& s) const {
        if (s.n < 1)
            throw ParameterError("ws: n must be >= 1");
        if (s.k_ring < 2 || s.k_ring % 2 != 0 || s.k_ring >= s.n)
            throw ParameterError("ws: k_ring must be even, >= 2 and < n");
        if (!is_probability(s.rewire_p))
            throw ParameterError("ws: rewire_p must lie in [0,1]");
    }
    void operator()(const SbmSpec& s) const {
        if (s.block_sizes.empty())
            throw ParameterError("sbm: at least one block required");
        for (auto b : s.block_sizes)
            if (b < 1)
                throw ParameterError("sbm: block sizes must be >= 1");
        if (s.block_p.size() != s.block_sizes.size())
            throw ParameterError("sbm: probability matrix must be square with one row per block");
        for (const auto& row : s.block_p) {
            if (row.size() != s.block_sizes.size())
                throw ParameterError("sbm: probability matrix must be square with one row per block");
            for (double p : row)
                if (!is_probability(p))
                    throw ParameterError("sbm: probabilities must lie in [0,1]");
        }
    }
    void operator()(const StarEnsembleSpec& s) const {
        if (s.n_egos < 1 || s.trials < 1)
            throw ParameterError("star: counts must be >= 1");
        if (!(s.p > 0.0 && s.p <= 1.0))
            throw ParameterError("star: p must lie in (0,1] for a zero-truncated binomial");
    }
    void operator()(const EdgeListSpec& s) const {
        if (s.path.empty())
            throw ParameterError("edgelist: path required");
    }
};

/// Calls emit(i) for each index in [0, total) kept independently with
/// probability p, using geometric skips.
template <class Emit>
void bernoulli_indices(std::uint64_t total, double p, Rng& rng, Emit&& emit) {
    if (p <= 0.0 || total == 0)
        return;
    if (p >= 1.0) {
        for (std::uint64_t i = 0; i < total; ++i)
            emit(i);
        return;
    }
    const double log_q = std::log1p(-p);
    std::uint64_t i = 0;
    for (;;) {
        double u = uniform01(rng);
        double skip = std::floor(std::log1p(-u) / log_q);
        if (skip >= static_cast<double>(total - i))
            return;
        i += static_cast<std::uint64_t>(skip);
        emit(i);
        ++i;
        if (i >= total)
            return;
    }
}

/// Random pairs inside one block of `size` nodes starting at `offset`
/// (Batagelj-Brandes ordering over the lower triangle).
void sample_within(std::size_t offset, std::size_t size, double p, Rng& rng, std::vector<Edge>& out) {
    if (size < 2)
        return;
    std::uint64_t total = static_cast<std::uint64_t>(size) * (size - 1) / 2;
    // Row v holds pairs (v, w) with w < v, starting at index v(v-1)/2.
    std::uint64_t v = 1;
    bernoulli_indices(total, p, rng, [&](std::uint64_t idx) {
        while ((v + 1) * v / 2 <= idx)
            ++v;
        std::uint64_t w = idx - v * (v - 1) / 2;
        out.emplace_back(static_cast<NodeId>(offset + w), static_cast<NodeId>(offset + v));
    });
}

Graph giant(const Graph& raw, const std::string& model) {
    auto comp = largest_connected_component(raw);
    if (comp.graph.n_nodes() < 2)
        throw GenerationError(model + ": largest connected component is empty");
    return std::move(comp.graph);
}

Graph generate_er(const ErSpec& s, Rng& rng) {
    std::vector<Edge> edges;
    sample_within(0, s.n, s.p, rng, edges);
    return giant(Graph::from_edges(s.n, edges), "er");
}

Graph generate_ba(const BaSpec& s, Rng& rng) {
    std::vector<Edge> edges;
    std::vector<NodeId> ends; // each node repeated once per incident edge
    const std::size_t core = s.m + 1;
    for (NodeId u = 0; u < core && u < s.n; ++u)
        for (NodeId v = 0; v < u; ++v) {
            edges.emplace_back(v, u);
            ends.push_back(u);
            ends.push_back(v);
        }
    std::vector<NodeId> targets;
    for (std::size_t u = core; u < s.n; ++u) {
        targets.clear();
        while (targets.size() < s.m) {
            std::uniform_int_distribution<std::size_t> pick(0, ends.size() - 1);
            NodeId t = ends[pick(rng)];
            if (std::find(targets.begin(), targets.end(), t) == targets.end())
                targets.push_back(t);
        }
        for (NodeId t : targets) {
            edges.emplace_back(t, static_cast<NodeId>(u));
            ends.push_back(t);
            ends.push_back(static_cast<NodeId>(u));
        }
    }
    return giant(Graph::from_edges(s.n, edges), "ba");
}

Graph generate_ws(const WsSpec& s, Rng& rng) {
    std::vector<std::unordered_set<NodeId>> adj(s.n);
    auto link = [&](NodeId a, NodeId b) {
        adj[a].insert(b);
        adj[b].insert(a);
    };
    const std::size_t half = s.k_ring / 2;
    for (std::size_t u = 0; u < s.n; ++u)
        for (std::size_t j = 1; j <= half; ++j)
            link(static_cast<NodeId>(u), static_cast<NodeId>((u + j) % s.n));
    std::uniform_int_distribution<std::size_t> any(0, s.n - 1);
    for (std::size_t j = 1; j <= half; ++j)
        for (std::size_t u = 0; u < s.n; ++u) {
            NodeId a = static_cast<NodeId>(u);
            NodeId b = static_cast<NodeId>((u + j) % s.n);
            if (!bernoulli(rng, s.rewire_p) || !adj[a].count(b))
                continue;
            if (adj[a].size() >= s.n - 1)
                continue;
            NodeId w;
            do {
                w = static_cast<NodeId>(any(rng));
            } while (w == a || adj[a].count(w));
            adj[a].erase(b);
            adj[b].erase(a);
            link(a, w);
        }
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < s.n; ++u)
        for (NodeId v : adj[u])
            if (u < v)
                edges.emplace_back(static_cast<NodeId>(u), v);
    return giant(Graph::from_edges(s.n, edges), "ws");
}

Graph generate_sbm(const SbmSpec& s, Rng& rng) {
    std::vector<std::size_t> offset(s.block_sizes.size() + 1, 0);
    for (std::size_t b = 0; b < s.block_sizes.size(); ++b)
        offset[b + 1] = offset[b] + s.block_sizes[b];
    std::vector<Edge> edges;
    for (std::size_t a = 0; a < s.block_sizes.size(); ++a) {
        sample_within(offset[a], s.block_sizes[a], s.block_p[a][a], rng, edges);
        for (std::size_t b = a + 1; b < s.block_sizes.size(); ++b) {
            const std::uint64_t cols = s.block_sizes[b];
            const std::uint64_t total = static_cast<std::uint64_t>(s.block_sizes[a]) * cols;
            bernoulli_indices(total, s.block_p[a][b], rng, [&](std::uint64_t idx) {
                edges.emplace_back(static_cast<NodeId>(offset[a] + idx / cols),
                                   static_cast<NodeId>(offset[b] + idx % cols));
            });
        }
    }
    return giant(Graph::from_edges(offset.back(), edges), "sbm");
}

Graph generate_stars(const StarEnsembleSpec& s, Rng& rng) {
    std::vector<Edge> edges;
    NodeId next = 0;
    for (std::size_t e = 0; e < s.n_egos; ++e) {
        std::size_t k = sample_truncated_binomial(s.trials, s.p, rng);
        NodeId center = next++;
        for (std::size_t j = 0; j < k; ++j)
            edges.emplace_back(center, next++);
    }
    return Graph::from_edges(next, edges);
}

} // namespace

void validate(const ModelSpec& spec) {
    std::visit(Validator{}, spec);
}

std::string model_name(const ModelSpec& spec) {
    static const char* names[] = {"er", "ba", "ws", "sbm", "star", "edgelist"};
    return names[spec.index()];
}

Graph generate(const ModelSpec& spec, std::uint64_t seed) {
    validate(spec);
    Rng rng{seed};
    struct Gen {
        Rng& rng;
        Graph operator()(const ErSpec& s) const { return generate_er(s, rng); }
        Graph operator()(const BaSpec& s) const { return generate_ba(s, rng); }
        Graph operator()(const WsSpec& s) const { return generate_ws(s, rng); }
        Graph operator()(const SbmSpec& s) const { return generate_sbm(s, rng); }
        Graph operator()(const StarEnsembleSpec& s) const { return generate_stars(s, rng); }
        Graph operator()(const EdgeListSpec& s) const { return load_edge_list(s.path).graph; }
    };
    return std::visit(Gen{rng}, spec);
}

std::size_t sample_truncated_binomial(std::size_t trials, double p, Rng& rng) {
    if (!(p > 0.0 && p <= 1.0) || trials < 1)
        throw ParameterError("truncated binomial needs trials >= 1 and p in (0,1]");
    std::binomial_distribution<std::size_t> dist(trials, p);
    for (;;) {
        std::size_t k = dist(rng);
        if (k > 0)
            return k;
    }
}

double truncated_binomial_mean(std::size_t trials, double p) {
    const double n = static_cast<double>(trials);
    return n * p / (1.0 - std::pow(1.0 - p, n));
}

std::vector<double> truncated_binomial_pmf(std::size_t trials, double p, std::size_t k_max) {
    k_max = std::min(k_max, trials);
    std::vector<double> pmf(k_max + 1, 0.0);
    const double n = static_cast<double>(trials);
    const double p0 = std::pow(1.0 - p, n);
    for (std::size_t k = 1; k <= k_max; ++k) {
        const double kk = static_cast<double>(k);
        double log_pmf = std::lgamma(n + 1) - std::lgamma(kk + 1) - std::lgamma(n - kk + 1) +
                         kk * std::log(p) + (n - kk) * std::log1p(-p);
        pmf[k] = std::exp(log_pmf) / (1.0 - p0);
    }
    return pmf;
}

Component largest_connected_component(const Graph& g) {
    const std::size_t n = g.n_nodes();
    std::vector<std::uint32_t> label(n, UINT32_MAX);
    std::uint32_t best_label = 0;
    std::size_t best_size = 0;
    std::uint32_t next_label = 0;
    std::vector<NodeId> stack;
    for (NodeId s = 0; s < n; ++s) {
        if (label[s] != UINT32_MAX)
            continue;
        std::size_t size = 0;
        stack.assign(1, s);
        label[s] = next_label;
        while (!stack.empty()) {
            NodeId v = stack.back();
            stack.pop_back();
            ++size;
            for (NodeId w : g.neighbours(v))
                if (label[w] == UINT32_MAX) {
                    label[w] = next_label;
                    stack.push_back(w);
                }
        }
        // Components are discovered in order of their smallest id, so a
        // strict comparison keeps the earliest one on ties.
        if (size > best_size) {
            best_size = size;
            best_label = next_label;
        }
        ++next_label;
    }
    Component out;
    std::vector<NodeId> new_id(n, UINT32_MAX);
    for (NodeId v = 0; v < n; ++v)
        if (label[v] == best_label) {
            new_id[v] = static_cast<NodeId>(out.original_id.size());
            out.original_id.push_back(v);
        }
    std::vector<Edge> edges;
    for (auto [u, v] : g.edges())
        if (label[u] == best_label)
            edges.emplace_back(new_id[u], new_id[v]);
    out.graph = Graph::from_edges(out.original_id.size(), edges);
    return out;
}

Component degree_biased_subsample(const Graph& g, std::size_t target_n, std::uint64_t seed) {
    const std::size_t n = g.n_nodes();
    if (target_n < 1 || target_n > n)
        throw ParameterError("subsample: target_n must lie in [1, n_nodes]");
    Rng rng{seed};
    std::vector<char> included(n, 0);
    std::vector<std::size_t> unvisited(n);
    for (NodeId v = 0; v < n; ++v)
        unvisited[v] = g.degree(v);

    std::vector<NodeId> order;
    order.reserve(target_n);
    std::vector<NodeId> owners; // included nodes that may still have unvisited neighbours
    auto include = [&](NodeId v) {
        included[v] = 1;
        order.push_back(v);
        owners.push_back(v);
        for (NodeId w : g.neighbours(v))
            --unvisited[w];
    };
    std::uniform_int_distribution<std::size_t> any(0, n - 1);
    include(static_cast<NodeId>(any(rng)));

    std::vector<NodeId> cand;
    std::vector<double> weight;
    NodeId current = order.back();
    while (order.size() < target_n) {
        if (unvisited[current] == 0) {
            // Newest node exhausted: restart from a random included node.
            for (;;) {
                if (owners.empty())
                    throw GenerationError("subsample: graph is not connected enough to reach target_n");
                std::uniform_int_distribution<std::size_t> pick(0, owners.size() - 1);
                std::size_t i = pick(rng);
                if (unvisited[owners[i]] > 0) {
                    current = owners[i];
                    break;
                }
                owners[i] = owners.back();
                owners.pop_back();
            }
        }
        cand.clear();
        weight.clear();
        for (NodeId w : g.neighbours(current))
            if (!included[w]) {
                cand.push_back(w);
                weight.push_back(1.0 / static_cast<double>(g.degree(w)));
            }
        std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
        NodeId next = cand[pick(rng)];
        include(next);
        current = next;
    }

    Component out;
    out.original_id = order;
    std::sort(out.original_id.begin(), out.original_id.end());
    std::unordered_map<NodeId, NodeId> new_id;
    new_id.reserve(target_n * 2);
    for (std::size_t i = 0; i < out.original_id.size(); ++i)
        new_id.emplace(out.original_id[i], static_cast<NodeId>(i));
    std::vector<Edge> edges;
    for (NodeId v : out.original_id)
        for (NodeId w : g.neighbours(v))
            if (v < w && included[w])
                edges.emplace_back(new_id[v], new_id[w]);
    out.graph = Graph::from_edges(target_n, edges);
    return out;
}

EdgeListLoad parse_edge_list(std::istream& in, const std::string& source) {
    EdgeListLoad out;
    std::unordered_map<std::string, NodeId> ids;
    auto id_of = [&](const std::string& tok) {
        auto [it, fresh] = ids.emplace(tok, static_cast<NodeId>(out.labels.size()));
        if (fresh)
            out.labels.push_back(tok);
        return it->second;
    };
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        std::istringstream ss(line);
        std::string a, b, extra;
        if (!(ss >> a >> b) || (ss >> extra))
            throw ParseError(source, lineno, "expected exactly two node ids");
        const NodeId u = id_of(a);
        edges.emplace_back(u, id_of(b));
    }
    Graph::BuildStats stats;
    out.graph = Graph::from_edges(out.labels.size(), edges, &stats);
    out.self_loops = stats.self_loops;
    out.duplicates = stats.duplicates;
    return out;
}

EdgeListLoad load_edge_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open edge list " + path.string());
    return parse_edge_list(in, path.string());
}

void write_edge_list(const Graph& g, const std::filesystem::path& path, const std::string& header_json) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "# " << header_json << '\n';
    for (auto [u, v] : g.edges())
        out << u << ' ' << v << '\n';
    if (!out)
        throw IoError("write failed for " + path.string());
}

} // namespace clens
