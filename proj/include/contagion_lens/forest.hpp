#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "contagion_lens/features.hpp"
#include "contagion_lens/mechanism.hpp"

namespace clens {

/// Labelled feature rows. Row ids identify the originating adoption so
/// that train/test overlap can be detected.
struct Dataset {
    std::vector<FeatureVector> x;
    std::vector<Mechanism> y;
    std::vector<std::uint64_t> ids;
    std::string provenance;

    void add(const FeatureVector& f, Mechanism label, std::uint64_t id) {
        x.push_back(f);
        y.push_back(label);
        ids.push_back(id);
    }
    std::size_t size() const noexcept { return y.size(); }
    bool empty() const noexcept { return y.empty(); }
    std::array<std::size_t, 3> class_counts() const;
    Dataset subset(std::span<const std::size_t> rows) const;
    void append(const Dataset& other);
};

enum class Criterion : std::uint8_t { Gini, Entropy, Auto };
std::string_view to_string(Criterion c) noexcept;
Criterion parse_criterion(std::string_view s);

struct ForestConfig {
    std::size_t n_trees = 100;
    Criterion criterion = Criterion::Auto;  ///< Auto: 2-fold search over gini and entropy
    std::size_t features_per_split = 0;     ///< 0: ceil(sqrt(number of features))
    std::vector<std::size_t> features;      ///< feature columns to use; empty: all
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

struct TreeNode {
    std::int32_t feature = -1; ///< -1 for a leaf
    double threshold = 0.0;    ///< go left when x[feature] <= threshold
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::array<std::uint32_t, 3> counts{}; ///< training rows per class reaching a leaf
    Mechanism vote = Mechanism::Sm;
};

struct Tree {
    std::vector<TreeNode> nodes; ///< node 0 is the root
    std::size_t depth() const;
};

struct Prediction {
    Mechanism label = Mechanism::Sm;
    double certainty = 0.0;        ///< share of trees voting for label
    std::array<double, 3> votes{}; ///< vote shares per class, summing to 1
};

class ForestModel {
public:
    Criterion criterion = Criterion::Gini;
    std::uint64_t seed = 0;
    std::size_t features_per_split = 0;
    std::vector<std::size_t> features; ///< columns of FeatureVector the trees index into
    std::vector<Tree> trees;
    std::vector<double> importance_raw;      ///< per entry of `features`, normalized
    std::vector<std::uint64_t> training_ids; ///< sorted
    std::string provenance;

    std::size_t n_trees() const noexcept { return trees.size(); }
    Prediction predict(const FeatureVector& fv) const;
    /// Throws ParameterError unless fv has kFeatureCount entries.
    Prediction predict(std::span<const double> fv) const;
};

ForestModel train(const Dataset& data, const ForestConfig& config);

struct ConfusionMatrix {
    std::array<std::array<std::size_t, 3>, 3> counts{}; ///< [true][predicted]
    std::size_t total() const noexcept;
    std::size_t trace() const noexcept;
    double accuracy() const;
    std::size_t row_sum(Mechanism truth) const noexcept;
    std::size_t column_sum(Mechanism predicted) const noexcept;
    /// Share of rows of class m predicted as m; NaN when the class is absent.
    double recall(Mechanism m) const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

struct Evaluation {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
};

/// Throws ParameterError on an empty test set and ConfigError when a test
/// row id occurs in the training ids.
Evaluation evaluate(const ForestModel& model, const Dataset& test);

struct FeatureImportance {
    std::size_t feature; ///< FeatureVector column
    double importance;
};
/// Mean impurity decrease, normalized to sum 1, highest first.
std::vector<FeatureImportance> feature_importance(const ForestModel& model);

struct SubsetScore {
    std::vector<std::size_t> features;
    double accuracy = 0.0;
};
struct SubsetSearchResult {
    std::size_t size = 0;
    SubsetScore best;
    std::vector<SubsetScore> all; ///< every subset of this size, best first
};

/// Every subset of exactly k features, trained on `train_rows` and scored
/// on `test`.
SubsetSearchResult best_subsets_of_size(const Dataset& train_rows, const Dataset& test, std::size_t k,
                                        const ForestConfig& config);

/// Exhaustive search over feature subsets of size 1..max_k. Each subset is
/// trained on `train_rows` and scored on `test`.
std::vector<SubsetSearchResult> best_subset_search(const Dataset& train_rows, const Dataset& test,
                                                   std::size_t max_k, const ForestConfig& config);

/// Versioned JSON with trees as nested node records.
std::string to_json(const ForestModel& model);
ForestModel forest_from_json(const std::string& text, const std::string& source);
void save_forest(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_forest(const std::filesystem::path& path);

} // namespace clens
