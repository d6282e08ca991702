#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "contagion_lens/features.hpp"
#include "contagion_lens/forest.hpp"
#include "contagion_lens/rng.hpp"
#include "contagion_lens/tempnet.hpp"

namespace clens {

/// Target hashtag variants, matched exactly.
const std::set<std::string>& default_hashtags();

/// ego -> followees
using FollowGraph = std::map<std::string, std::vector<std::string>>;

/// "ego followee" per line; blank and '#' lines ignored.
FollowGraph load_follow_graph(const std::filesystem::path& path);
FollowGraph parse_follow_graph(std::istream& in, const std::string& source);

struct Corpus {
    std::vector<EgoStream> streams; ///< one per ego of the follow graph, in key order
    std::size_t n_records = 0;
    std::size_t unknown_actors = 0; ///< records skipped: actor neither ego nor followee
};

/// Reads JSON-lines records {"actor", "ts", "hashtags"}. For every ego,
/// merges its followees' posts into one time-sorted stream and takes its
/// own first matching post as the adoption.
Corpus load_corpus(const std::vector<std::filesystem::path>& paths, const std::set<std::string>& hashtags,
                   const FollowGraph& follow);
Corpus parse_corpus(std::istream& in, const std::string& source, const std::set<std::string>& hashtags,
                    const FollowGraph& follow);

/// Observations of the adopting egos; ego ids index Corpus::streams.
/// Egos with no followee activity in the window are kept but are not
/// classifiable.
std::vector<EgoObservation> build_observations(const Corpus& corpus, double window_days = 7.0);

struct LogNormal {
    double mu = 0.0;
    double sigma = 0.0;
    std::size_t n = 0;

    double quantile(double u) const;
};

/// Log-space moment matching (population std of the logs).
LogNormal fit_lognormal(std::span<const double> values);

/// Parameter distributions that drive the activity-driven experiment.
struct EmpiricalParamModel {
    std::map<int, LogNormal> beta_by_class; ///< degree class -> log-normal of beta_hat
    std::vector<double> phi_samples;        ///< sorted raw phi_hat values
    std::map<int, double> activity_means;   ///< degree class -> mean activity in (0, 1]
    double filter_quantile = 0.8;

    /// Samples keep only the lowest filter_quantile of each distribution.
    /// The band [lo, hi) restricts further to a slice of that kept mass,
    /// so band {0.2, 0.4} is the second quintile.
    double sample_beta(std::size_t degree, Rng& rng, double band_lo = 0.0, double band_hi = 1.0) const;
    double sample_phi(Rng& rng, double band_lo = 0.0, double band_hi = 1.0) const;
    double beta_at(std::size_t degree, double u) const;
    double phi_at(double u) const;
    /// Class means expanded to every class between the smallest and largest
    /// fitted one, for assign_activities.
    std::map<int, double> activity_table(int max_class) const;
};

EmpiricalParamModel reference_param_model();

/// Fits from event-time observations. Degree classes with fewer than ten
/// beta_hat samples are merged into a neighbouring class.
EmpiricalParamModel fit_param_model(std::span<const EgoObservation> observations, double filter_quantile = 0.8);

std::string to_json(const EmpiricalParamModel& model);
EmpiricalParamModel param_model_from_json(const std::string& text, const std::string& source);
void save_param_model(const EmpiricalParamModel& model, const std::filesystem::path& path);
EmpiricalParamModel load_param_model(const std::filesystem::path& path);

/// Decile index of each value: the share of values strictly smaller, times 10.
std::vector<std::size_t> decile_index(std::span<const double> values);

struct DecileCell {
    std::array<std::size_t, 3> counts{};
    double certainty_sum = 0.0;

    std::size_t n() const noexcept { return counts[0] + counts[1] + counts[2]; }
    Mechanism dominant() const noexcept;
    double mean_certainty() const noexcept { return n() ? certainty_sum / static_cast<double>(n()) : 0.0; }
};

struct CorpusClassification {
    std::vector<std::size_t> rows;          ///< indices of the classified observations
    std::vector<Prediction> predictions;    ///< parallel to rows
    std::array<std::size_t, 3> forest_counts{};
    std::array<std::size_t, 3> likelihood_counts{};
    double r_hat = 0.0;
    std::array<std::array<DecileCell, 10>, 10> deciles{}; ///< [beta decile][phi decile]
    std::size_t outside_grid = 0;                         ///< classified rows without beta_hat
};

/// Forest predictions and unknown-parameter likelihood labels for every
/// classifiable observation, plus the (beta_hat, phi_hat) decile grid.
CorpusClassification classify_corpus(const ForestModel& model, std::span<const EgoObservation> observations);

/// ",Sm,Cx,St" then one row per method.
void write_counts_table(const CorpusClassification& c, std::ostream& out);
void write_decile_grid(const CorpusClassification& c, std::ostream& out);

struct FixtureOptions {
    double start_ts = 1543622400.0; ///< 2018-12-01
    double span_days = 6.0;
    std::string hashtag = "#GiletsJaunes";
};

/// Writes an activity-driven cascade as a corpus: one record per post, actor
/// "u<id>", timestamps spread evenly over span_days, plus the follow graph
/// with every node following all of its neighbours.
void write_fixture_corpus(const TemporalCascadeRecord& c, std::ostream& corpus, std::ostream& follow,
                          const FixtureOptions& options = {});

/// "u<id>" -> node id; empty for other names.
std::optional<NodeId> fixture_node(const std::string& actor);

} // namespace clens
