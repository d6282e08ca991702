#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contagion_lens/contagion.hpp"
#include "contagion_lens/tempnet.hpp"

namespace clens {

enum class Clock : std::uint8_t { Synchronous, EventTime };

struct NeighbourView {
    std::optional<Step> infection_time; ///< first observed infection, before adoption
    Step stimuli = 0;                   ///< stimuli received from this neighbour before adoption
};

/// Everything a classifier may know about one adoption: the ego, its
/// neighbours' infection times and stimuli, and the adoption time.
struct EgoObservation {
    std::uint64_t ego = 0;
    Step adoption_time = 0;
    std::vector<NeighbourView> neighbours;
    Step susceptible_steps = 0; ///< steps spent susceptible before adopting
    Step exposure_steps = 0;    ///< of those, steps with >= 1 infected neighbour
    Clock clock = Clock::Synchronous;
    /// Event time only: the last stimulus before adoption was some
    /// neighbour's first hashtag post.
    bool last_stimulus_from_new_neighbour = false;
    std::optional<Mechanism> true_label;
    std::uint64_t provenance = 0;

    std::size_t degree() const noexcept { return neighbours.size(); }
    bool classifiable() const noexcept { return !neighbours.empty(); }
};

inline constexpr std::size_t kFeatureCount = 8;
using FeatureVector = std::array<double, kFeatureCount>;

enum Feature : std::size_t {
    kDegree = 0,
    kProportionInfected,
    kInfectedNeighbours,
    kSumStimuli,
    kMeanStimuli,
    kStdStimuli,
    kTimeSinceFirst,
    kTimeSinceLast,
};

extern const std::array<std::string_view, kFeatureCount> kFeatureNames;

struct FeatureOptions {
    /// Mean and std of per-neighbour stimuli over all neighbours (true) or
    /// only over infected ones (false).
    bool stimulus_stats_over_all_neighbours = true;
};

/// Sentinel for the two timing features when no neighbour is infected.
inline constexpr double kNoInfectedNeighbour = -1.0;

/// Local view of a synchronous adopter. Stimuli from neighbour j are the
/// steps t with t_j <= t < t_a. Empty for non-adopters and the seed.
std::optional<EgoObservation> observation_from_cascade(const CascadeRecord& c, NodeId node);

/// Same for the ego of a star cascade.
std::optional<EgoObservation> observation_from_star(const StarCascade& s);

/// Builds an event-time observation one followee post at a time. The clock
/// advances by one per post; a hashtag post is a stimulus.
class EventTimeAccumulator {
public:
    explicit EventTimeAccumulator(std::size_t n_followees);

    void post(std::size_t followee, bool hashtag);
    Step clock() const noexcept { return clock_; }
    /// Observation with adoption at the current clock. Degree counts the
    /// followees that posted at least once.
    EgoObservation finish(std::uint64_t ego) const;

private:
    Step clock_ = 0;
    std::vector<Step> first_hashtag_;
    std::vector<Step> stimuli_;
    std::vector<char> posted_;
    bool last_new_ = false;
};

struct TimelineEvent {
    std::string actor;
    double ts = 0.0; ///< epoch seconds
    bool hashtag = false;
};

/// Followee posts of one ego, time-sorted, plus the ego's adoption time.
struct EgoStream {
    std::string ego;
    std::vector<TimelineEvent> followee_posts;
    std::optional<double> adoption_ts;
};

/// Event-time observation of an empirical ego. Only posts strictly before
/// the adoption and no older than window_days are kept (all earlier posts
/// when window_days is empty). Empty when the ego never adopted.
std::optional<EgoObservation> observation_from_events(const EgoStream& stream, std::optional<double> window_days,
                                                      std::uint64_t ego_id = 0);

/// Event-time observations of every observed adopter of an activity-driven
/// cascade. The clock of ego v counts posts by v's neighbours; the
/// adoption is v's detection.
std::vector<EgoObservation> observations_from_temporal(const TemporalCascadeRecord& c);

/// The eight features. Throws ParameterError for a degree-0 observation.
FeatureVector extract(const EgoObservation& obs, const FeatureOptions& options = {});

/// Step at which the adoption transition lands when the observation is read
/// as a synchronous trajectory. Event-time adoptions follow the last
/// counted post, so they land one step after the clock value.
Step trajectory_adoption_step(const EgoObservation& obs) noexcept;

/// Number of infected neighbours at each step 0..trajectory_adoption_step-1.
std::vector<std::size_t> infected_counts(const EgoObservation& obs);

struct ObservationRow {
    EgoObservation observation;
    std::optional<double> beta_hat;
    std::optional<double> phi_hat;
};

/// CSV with the eight features, label, beta_hat, phi_hat, followed by the
/// columns needed to rebuild the trajectory.
void write_observations_csv(std::span<const EgoObservation> observations, std::ostream& out,
                            const FeatureOptions& options = {});
std::vector<ObservationRow> read_observations_csv(std::istream& in, const std::string& source);

} // namespace clens
