#include "contagion_lens/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "contagion_lens/errors.hpp"
#include "contagion_lens/log.hpp"
#include "contagion_lens/parallel.hpp"
#include "contagion_lens/rng.hpp"

namespace clens {

std::array<std::size_t, 3> Dataset::class_counts() const {
    std::array<std::size_t, 3> c{};
    for (auto m : y)
        ++c[index_of(m)];
    return c;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.provenance = provenance;
    out.x.reserve(rows.size());
    out.y.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (auto i : rows)
        out.add(x.at(i), y[i], ids[i]);
    return out;
}

void Dataset::append(const Dataset& other) {
    x.insert(x.end(), other.x.begin(), other.x.end());
    y.insert(y.end(), other.y.begin(), other.y.end());
    ids.insert(ids.end(), other.ids.begin(), other.ids.end());
}

std::string_view to_string(Criterion c) noexcept {
    switch (c) {
    case Criterion::Gini: return "gini";
    case Criterion::Entropy: return "entropy";
    case Criterion::Auto: return "auto";
    }
    return "?";
}

Criterion parse_criterion(std::string_view s) {
    for (auto c : {Criterion::Gini, Criterion::Entropy, Criterion::Auto})
        if (to_string(c) == s)
            return c;
    throw ConfigError("unknown split criterion '" + std::string(s) + "'");
}

std::size_t Tree::depth() const {
    if (nodes.empty())
        return 0;
    std::size_t best = 0;
    std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        const auto& nd = nodes[static_cast<std::size_t>(i)];
        if (nd.feature >= 0) {
            stack.emplace_back(nd.left, d + 1);
            stack.emplace_back(nd.right, d + 1);
        }
    }
    return best;
}

namespace {

using Counts = std::array<double, 3>;

double impurity(const Counts& c, double n, Criterion crit) {
    if (n <= 0.0)
        return 0.0;
    double out = crit == Criterion::Entropy ? 0.0 : 1.0;
    for (double ci : c) {
        if (ci <= 0.0)
            continue;
        double p = ci / n;
        if (crit == Criterion::Entropy)
            out -= p * std::log2(p);
        else
            out -= p * p;
    }
    return out;
}

Mechanism argmax_priority(const std::array<double, 3>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (v[i] > v[best])
            best = i;
    return static_cast<Mechanism>(best);
}

struct Columns {
    std::vector<std::vector<double>> values; ///< [feature slot][row]
    std::vector<std::uint8_t> labels;
};

Columns columns_of(const Dataset& data, const std::vector<std::size_t>& features) {
    Columns c;
    c.values.assign(features.size(), std::vector<double>(data.size()));
    c.labels.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t f = 0; f < features.size(); ++f)
            c.values[f][i] = data.x[i][features[f]];
        c.labels[i] = static_cast<std::uint8_t>(index_of(data.y[i]));
    }
    return c;
}

struct SplitChoice {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double child_impurity = 0.0; ///< weighted sum nl * imp_l + nr * imp_r
    double left_imp = 0.0, right_imp = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const Columns& cols, Criterion crit, std::size_t mtry, Rng& rng, std::vector<double>& gain)
        : cols_(cols), crit_(crit), mtry_(mtry), rng_(rng), gain_(gain) {}

    Tree build(std::vector<std::uint32_t> rows) {
        rows_ = std::move(rows);
        Tree tree;
        struct Task {
            std::int32_t node;
            std::size_t lo, hi;
        };
        tree.nodes.emplace_back();
        std::vector<Task> stack{{0, 0, rows_.size()}};
        std::vector<std::size_t> order(cols_.values.size());
        while (!stack.empty()) {
            Task task = stack.back();
            stack.pop_back();
            Counts counts{};
            for (std::size_t i = task.lo; i < task.hi; ++i)
                counts[cols_.labels[rows_[i]]] += 1.0;
            const double n = static_cast<double>(task.hi - task.lo);
            const double imp = impurity(counts, n, crit_);
            auto& leaf = tree.nodes[static_cast<std::size_t>(task.node)];
            for (std::size_t c = 0; c < 3; ++c)
                leaf.counts[c] = static_cast<std::uint32_t>(counts[c]);
            leaf.vote = argmax_priority(counts);
            if (imp <= 1e-12)
                continue;
            auto split = find_split(task.lo, task.hi, n * imp, order);
            if (split.feature < 0)
                continue;
            gain_[static_cast<std::size_t>(split.feature)] += n * imp - split.child_impurity;
            const auto& col = cols_.values[static_cast<std::size_t>(split.feature)];
            auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(task.lo),
                                      rows_.begin() + static_cast<std::ptrdiff_t>(task.hi),
                                      [&](std::uint32_t r) { return col[r] <= split.threshold; });
            const auto cut = static_cast<std::size_t>(mid - rows_.begin());
            const auto left = static_cast<std::int32_t>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            auto& parent = tree.nodes[static_cast<std::size_t>(task.node)];
            parent.feature = split.feature;
            parent.threshold = split.threshold;
            parent.left = left;
            parent.right = left + 1;
            stack.push_back({left + 1, cut, task.hi});
            stack.push_back({left, task.lo, cut});
        }
        return tree;
    }

private:
    SplitChoice find_split(std::size_t lo, std::size_t hi, double parent_weighted, std::vector<std::size_t>& order) {
        std::iota(order.begin(), order.end(), 0);
        SplitChoice best;
        double best_score = parent_weighted - 1e-9 * std::max(1.0, parent_weighted);
        std::size_t tried = 0;
        for (std::size_t j = 0; j < order.size(); ++j) {
            if (tried >= mtry_ && best.feature >= 0)
                break;
            std::uniform_int_distribution<std::size_t> pick(j, order.size() - 1);
            std::swap(order[j], order[pick(rng_)]);
            const std::size_t f = order[j];
            ++tried;
            scan_feature(f, lo, hi, best, best_score);
        }
        return best;
    }

    void scan_feature(std::size_t f, std::size_t lo, std::size_t hi, SplitChoice& best, double& best_score) {
        const auto& col = cols_.values[f];
        buf_.clear();
        for (std::size_t i = lo; i < hi; ++i)
            buf_.emplace_back(col[rows_[i]], cols_.labels[rows_[i]]);
        std::sort(buf_.begin(), buf_.end());
        if (buf_.front().first == buf_.back().first)
            return;
        Counts total{};
        for (auto& [v, l] : buf_)
            total[l] += 1.0;
        Counts left{};
        const double n = static_cast<double>(buf_.size());
        for (std::size_t i = 0; i + 1 < buf_.size(); ++i) {
            left[buf_[i].second] += 1.0;
            if (buf_[i].first == buf_[i + 1].first)
                continue;
            const double nl = static_cast<double>(i + 1), nr = n - nl;
            Counts right{total[0] - left[0], total[1] - left[1], total[2] - left[2]};
            const double il = impurity(left, nl, crit_), ir = impurity(right, nr, crit_);
            const double score = nl * il + nr * ir;
            if (score < best_score) {
                best_score = score;
                double mid = 0.5 * (buf_[i].first + buf_[i + 1].first);
                if (!(mid < buf_[i + 1].first))
                    mid = buf_[i].first;
                best.feature = static_cast<std::int32_t>(f);
                best.threshold = mid;
                best.child_impurity = score;
                best.left_imp = il;
                best.right_imp = ir;
            }
        }
    }

    const Columns& cols_;
    Criterion crit_;
    std::size_t mtry_;
    Rng& rng_;
    std::vector<double>& gain_;
    std::vector<std::uint32_t> rows_;
    std::vector<std::pair<double, std::uint8_t>> buf_;
};

ForestModel train_fixed(const Dataset& data, const ForestConfig& config, Criterion crit) {
    ForestModel model;
    model.criterion = crit;
    model.seed = config.seed;
    model.features = config.features;
    if (model.features.empty()) {
        model.features.resize(kFeatureCount);
        std::iota(model.features.begin(), model.features.end(), 0);
    }
    for (auto f : model.features)
        if (f >= kFeatureCount)
            throw ParameterError("train: feature index out of range");
    const std::size_t nf = model.features.size();
    model.features_per_split = config.features_per_split == 0
                                   ? static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(nf))))
                                   : std::min(config.features_per_split, nf);
    model.provenance = data.provenance;
    model.training_ids = data.ids;
    std::sort(model.training_ids.begin(), model.training_ids.end());

    const auto cols = columns_of(data, model.features);
    const std::size_t n = data.size();
    model.trees.resize(config.n_trees);
    std::vector<std::vector<double>> gains(config.n_trees, std::vector<double>(nf, 0.0));
    parallel_for(config.n_trees, config.jobs, [&](std::size_t t) {
        Rng rng = make_rng(config.seed, {t});
        std::uniform_int_distribution<std::uint32_t> row(0, static_cast<std::uint32_t>(n - 1));
        std::vector<std::uint32_t> sample(n);
        for (auto& s : sample)
            s = row(rng);
        TreeBuilder builder(cols, crit, model.features_per_split, rng, gains[t]);
        model.trees[t] = builder.build(std::move(sample));
    });
    model.importance_raw.assign(nf, 0.0);
    for (const auto& g : gains) {
        double s = std::accumulate(g.begin(), g.end(), 0.0);
        if (s > 0.0)
            for (std::size_t f = 0; f < nf; ++f)
                model.importance_raw[f] += g[f] / s;
    }
    double s = std::accumulate(model.importance_raw.begin(), model.importance_raw.end(), 0.0);
    if (s > 0.0)
        for (auto& v : model.importance_raw)
            v /= s;
    return model;
}

} // namespace

ForestModel train(const Dataset& data, const ForestConfig& config) {
    if (data.empty())
        throw ParameterError("train: empty dataset");
    if (data.x.size() != data.y.size() || data.ids.size() != data.y.size())
        throw ParameterError("train: dataset columns differ in length");
    if (config.n_trees == 0)
        throw ParameterError("train: n_trees must be >= 1");
    auto counts = data.class_counts();
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
        warn("train: single-class data, the model predicts a constant");

    Criterion crit = config.criterion;
    if (crit == Criterion::Auto) {
        std::vector<std::size_t> perm(data.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng = make_rng(config.seed, {0x5eedf01dULL});
        std::shuffle(perm.begin(), perm.end(), rng);
        const std::size_t half = perm.size() / 2;
        if (half == 0) {
            crit = Criterion::Gini;
        } else {
            std::span<const std::size_t> all(perm);
            Dataset a = data.subset(all.first(half)), b = data.subset(all.subspan(half));
            a.ids.assign(a.size(), 0);
            b.ids.assign(b.size(), 0);
            double best = -1.0;
            for (auto c : {Criterion::Gini, Criterion::Entropy}) {
                ForestConfig cfg = config;
                cfg.seed = derive_seed(config.seed, {0x5eedf01dULL, static_cast<std::uint64_t>(c)});
                double acc = 0.5 * (evaluate(train_fixed(a, cfg, c), b).accuracy +
                                     evaluate(train_fixed(b, cfg, c), a).accuracy);
                if (acc > best) {
                    best = acc;
                    crit = c;
                }
            }
        }
    }
    return train_fixed(data, config, crit);
}

Prediction ForestModel::predict(const FeatureVector& fv) const {
    Prediction p;
    if (trees.empty())
        throw ParameterError("predict: model has no trees");
    std::array<double, 3> votes{};
    for (const auto& tree : trees) {
        std::size_t i = 0;
        while (tree.nodes[i].feature >= 0) {
            const auto& nd = tree.nodes[i];
            i = static_cast<std::size_t>(fv[features[static_cast<std::size_t>(nd.feature)]] <= nd.threshold
                                             ? nd.left
                                             : nd.right);
        }
        votes[index_of(tree.nodes[i].vote)] += 1.0;
    }
    const double n = static_cast<double>(trees.size());
    for (std::size_t c = 0; c < 3; ++c)
        p.votes[c] = votes[c] / n;
    p.label = argmax_priority(votes);
    p.certainty = p.votes[index_of(p.label)];
    return p;
}

Prediction ForestModel::predict(std::span<const double> fv) const {
    if (fv.size() != kFeatureCount)
        throw ParameterError("predict: expected " + std::to_string(kFeatureCount) + " features, got " +
                             std::to_string(fv.size()));
    FeatureVector f;
    std::copy(fv.begin(), fv.end(), f.begin());
    return predict(f);
}

std::size_t ConfusionMatrix::total() const noexcept {
    std::size_t s = 0;
    for (auto& row : counts)
        for (auto c : row)
            s += c;
    return s;
}

std::size_t ConfusionMatrix::trace() const noexcept {
    return counts[0][0] + counts[1][1] + counts[2][2];
}

double ConfusionMatrix::accuracy() const {
    const auto t = total();
    if (t == 0)
        throw ParameterError("accuracy of an empty confusion matrix");
    return static_cast<double>(trace()) / static_cast<double>(t);
}

std::size_t ConfusionMatrix::row_sum(Mechanism truth) const noexcept {
    const auto& row = counts[index_of(truth)];
    return row[0] + row[1] + row[2];
}

std::size_t ConfusionMatrix::column_sum(Mechanism predicted) const noexcept {
    const auto c = index_of(predicted);
    return counts[0][c] + counts[1][c] + counts[2][c];
}

double ConfusionMatrix::recall(Mechanism m) const {
    const auto r = row_sum(m);
    if (r == 0)
        return std::nan("");
    return static_cast<double>(counts[index_of(m)][index_of(m)]) / static_cast<double>(r);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            counts[i][j] += other.counts[i][j];
    return *this;
}

Evaluation evaluate(const ForestModel& model, const Dataset& test) {
    if (test.empty())
        throw ParameterError("evaluate: empty test set");
    Evaluation ev;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (!test.ids.empty() && test.ids[i] != 0 &&
            std::binary_search(model.training_ids.begin(), model.training_ids.end(), test.ids[i]))
            throw ConfigError("evaluate: test row " + std::to_string(test.ids[i]) + " was used for training");
        auto p = model.predict(test.x[i]);
        ++ev.confusion.counts[index_of(test.y[i])][index_of(p.label)];
    }
    ev.accuracy = ev.confusion.accuracy();
    return ev;
}

std::vector<FeatureImportance> feature_importance(const ForestModel& model) {
    std::vector<FeatureImportance> out;
    for (std::size_t f = 0; f < model.features.size(); ++f)
        out.push_back({model.features[f], f < model.importance_raw.size() ? model.importance_raw[f] : 0.0});
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.importance > b.importance; });
    return out;
}

SubsetSearchResult best_subsets_of_size(const Dataset& train_rows, const Dataset& test, std::size_t k,
                                        const ForestConfig& config) {
    if (k == 0 || k > kFeatureCount)
        throw ParameterError("subset size must lie in [1, 8]");
    SubsetSearchResult res;
    res.size = k;
    std::vector<bool> pick(kFeatureCount, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), true);
    do {
        SubsetScore s;
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            if (pick[f])
                s.features.push_back(f);
        ForestConfig cfg = config;
        cfg.features = s.features;
        s.accuracy = evaluate(train(train_rows, cfg), test).accuracy;
        res.all.push_back(std::move(s));
    } while (std::prev_permutation(pick.begin(), pick.end()));
    std::stable_sort(res.all.begin(), res.all.end(),
                     [](const auto& a, const auto& b) { return a.accuracy > b.accuracy; });
    res.best = res.all.front();
    return res;
}

std::vector<SubsetSearchResult> best_subset_search(const Dataset& train_rows, const Dataset& test,
                                                   std::size_t max_k, const ForestConfig& config) {
    if (max_k == 0 || max_k > kFeatureCount)
        throw ParameterError("best_subset_search: max_k must lie in [1, 8]");
    std::vector<SubsetSearchResult> out;
    for (std::size_t k = 1; k <= max_k; ++k)
        out.push_back(best_subsets_of_size(train_rows, test, k, config));
    return out;
}

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json node_json(const Tree& tree, std::size_t i) {
    const auto& nd = tree.nodes[i];
    if (nd.feature < 0)
        return json{{"counts", nd.counts}, {"vote", to_string(nd.vote)}};
    return json{{"feature", nd.feature},
                {"threshold", nd.threshold},
                {"left", node_json(tree, static_cast<std::size_t>(nd.left))},
                {"right", node_json(tree, static_cast<std::size_t>(nd.right))}};
}

std::int32_t read_node(const json& j, Tree& tree, std::size_t nf) {
    const auto self = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("feature")) {
        auto f = j.at("feature").get<std::int32_t>();
        if (f < 0 || static_cast<std::size_t>(f) >= nf)
            throw ParameterError("feature slot out of range");
        double thr = j.at("threshold").get<double>();
        auto l = read_node(j.at("left"), tree, nf);
        auto r = read_node(j.at("right"), tree, nf);
        auto& nd = tree.nodes[static_cast<std::size_t>(self)];
        nd.feature = f;
        nd.threshold = thr;
        nd.left = l;
        nd.right = r;
    } else {
        auto& nd = tree.nodes[static_cast<std::size_t>(self)];
        nd.counts = j.at("counts").get<std::array<std::uint32_t, 3>>();
        auto v = parse_mechanism(j.at("vote").get<std::string>());
        if (!v)
            throw ParameterError("unknown vote label");
        nd.vote = *v;
    }
    return self;
}

} // namespace

std::string to_json(const ForestModel& model) {
    json j;
    j["format"] = "contagion_lens.forest";
    j["version"] = kFormatVersion;
    j["criterion"] = to_string(model.criterion);
    j["seed"] = model.seed;
    j["features_per_split"] = model.features_per_split;
    j["features"] = model.features;
    std::vector<std::string> names;
    for (auto f : model.features)
        names.emplace_back(kFeatureNames[f]);
    j["feature_names"] = names;
    j["classes"] = {"Sm", "Cx", "St"};
    j["importance"] = model.importance_raw;
    j["training_ids"] = model.training_ids;
    j["provenance"] = model.provenance;
    json trees = json::array();
    for (const auto& t : model.trees)
        trees.push_back(node_json(t, 0));
    j["trees"] = std::move(trees);
    return j.dump();
}

ForestModel forest_from_json(const std::string& text, const std::string& source) {
    try {
        json j = json::parse(text);
        if (j.at("format") != "contagion_lens.forest")
            throw ParseError(source, 1, "not a forest model");
        if (j.at("version").get<int>() != kFormatVersion)
            throw ParseError(source, 1, "unsupported forest version " + j.at("version").dump());
        ForestModel m;
        m.criterion = parse_criterion(j.at("criterion").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.features_per_split = j.at("features_per_split").get<std::size_t>();
        m.features = j.at("features").get<std::vector<std::size_t>>();
        for (auto f : m.features)
            if (f >= kFeatureCount)
                throw ParseError(source, 1, "feature index out of range");
        m.importance_raw = j.at("importance").get<std::vector<double>>();
        m.training_ids = j.at("training_ids").get<std::vector<std::uint64_t>>();
        m.provenance = j.value("provenance", "");
        for (const auto& t : j.at("trees")) {
            Tree tree;
            read_node(t, tree, m.features.size());
            m.trees.push_back(std::move(tree));
        }
        if (m.trees.empty())
            throw ParseError(source, 1, "model has no trees");
        return m;
    } catch (const json::exception& e) {
        throw ParseError(source, 1, e.what());
    } catch (const std::invalid_argument& e) {
        throw ParseError(source, 1, e.what());
    }
}

void save_forest(const ForestModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << to_json(model) << '\n';
    if (!out)
        throw IoError("failed writing " + path.string());
}

ForestModel load_forest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return forest_from_json(ss.str(), path.string());
}

} // namespace clens
