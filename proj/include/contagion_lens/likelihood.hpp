#pragma once

#include <array>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>

#include "contagion_lens/features.hpp"
#include "contagion_lens/graph.hpp"

namespace clens {

/// State change of the ego between two consecutive steps.
enum class Transition : std::uint8_t { Stay, Adopt, Infected };

/// Assigned mechanism and the mechanism that fired, as a pair.
enum class Scenario : std::uint8_t {
    SimpleBySimple,
    SimpleBySpontaneous,
    ComplexByComplex,
    ComplexBySpontaneous,
};

struct ModelParams {
    std::optional<double> beta;
    std::optional<double> phi;
    double r = 0.0;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Log-probability of one step. Without spontaneous adoption only
/// SimpleBySimple and ComplexByComplex are defined and r is ignored.
/// Throws ConfigError when the scenario needs a parameter that is absent.
double step_loglik(Transition tr, std::size_t n_inf, std::size_t k, Scenario s, const ModelParams& p,
                   bool with_spontaneous);

/// Sum of step terms from step 0 up to the adoption, evaluated in runs of
/// constant infected-neighbour count.
double trajectory_loglik(const EgoObservation& obs, Scenario s, const ModelParams& p, bool with_spontaneous);

struct ClassificationResult {
    Mechanism predicted = Mechanism::Sm;
    std::array<double, 3> loglik{kNegInf, kNegInf, kNegInf}; ///< indexed by Mechanism
    double margin = 0.0; ///< best minus runner-up; +inf when only one is finite
};

/// Arg-max with ties broken Sm > Cx > St. Only the first n_classes entries compete.
ClassificationResult decide(const std::array<double, 3>& loglik, std::size_t n_classes);

/// Two classes: Sm against Cx without spontaneous adoption. Three classes:
/// L(St) is the larger of the two spontaneous scenarios.
ClassificationResult classify_known(const EgoObservation& obs, const ModelParams& p, std::size_t n_classes);

struct EstimatedParams {
    std::optional<double> beta_hat; ///< 1 / received stimuli; empty without stimuli
    double phi_hat = 0.0;           ///< proportion of infected neighbours at adoption
};
EstimatedParams estimate_params(const EgoObservation& obs);

struct REstimate {
    double literal = 0.0;     ///< mean per-node share of susceptible time with an infected neighbour
    double alternative = 0.0; ///< St-fired adoptions per susceptible node-step
    std::size_t n_used = 0;
};
/// The alternative estimate needs true labels; unlabelled observations are
/// counted as not St-fired.
REstimate estimate_r(std::span<const EgoObservation> observations);

/// Plugs the estimates into the three-class comparison. The threshold
/// counts as reached at phi_hat itself, since phi_hat is the proportion
/// that triggered the adoption.
ClassificationResult classify_unknown(const EgoObservation& obs, double r_hat);

/// Threshold that makes n_inf >= phi_hat * k the adoption condition under
/// the strict rule.
double effective_phi(double phi_hat, std::size_t k) noexcept;

/// Two-class accuracy of the maximum-likelihood rule for a star ego of
/// degree k whose neighbours adopt spontaneously with probability r.
/// Returns 1 with a warning when the threshold cannot be reached.
double analytic_accuracy(std::size_t k, double beta, double phi, double r);

/// analytic_accuracy averaged over the zero-truncated binomial degree law.
double analytic_accuracy(const StarEnsembleSpec& degree_law, double beta, double phi, double r);

/// ego,predicted,true_label,ll_Sm,ll_Cx,ll_St,margin
void write_classification_header(std::ostream& out);
void write_classification_row(std::ostream& out, std::uint64_t ego, const ClassificationResult& res,
                              std::optional<Mechanism> truth);

} // namespace clens
