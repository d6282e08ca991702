#include "contagion_lens/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "contagion_lens/errors.hpp"
#include "contagion_lens/log.hpp"

namespace clens {

namespace {

double need_beta(const ModelParams& p) {
    if (!p.beta)
        throw ConfigError("likelihood: beta required for a simple-contagion scenario");
    return *p.beta;
}

double need_phi(const ModelParams& p) {
    if (!p.phi)
        throw ConfigError("likelihood: phi required for a complex-contagion scenario");
    return *p.phi;
}

double safe_log(double x) {
    return x > 0.0 ? std::log(x) : kNegInf;
}

/// log (1 - beta)^n, with 0^0 = 1.
double log_escape(std::size_t n, double beta) {
    if (n == 0)
        return 0.0;
    return static_cast<double>(n) * std::log1p(-beta);
}

/// log (1 - (1 - beta)^n).
double log_hit(std::size_t n, double beta) {
    if (n == 0)
        return kNegInf;
    double le = log_escape(n, beta);
    return le == kNegInf ? 0.0 : safe_log(-std::expm1(le));
}

} // namespace

double step_loglik(Transition tr, std::size_t n_inf, std::size_t k, Scenario s, const ModelParams& p,
                   bool with_spontaneous) {
    if (n_inf > k)
        throw ParameterError("step_loglik: more infected neighbours than neighbours");
    const bool simple = s == Scenario::SimpleBySimple || s == Scenario::SimpleBySpontaneous;
    const bool spont = s == Scenario::SimpleBySpontaneous || s == Scenario::ComplexBySpontaneous;
    if (!with_spontaneous && spont)
        throw ConfigError("step_loglik: spontaneous scenario requested without spontaneous adoption");
    if (tr == Transition::Infected)
        return 0.0;

    const double log_r = safe_log(p.r);
    const double log_not_r = with_spontaneous ? std::log1p(-p.r) : 0.0;

    if (simple) {
        const double beta = need_beta(p);
        if (tr == Transition::Stay)
            return log_not_r + log_escape(n_inf, beta);
        if (!with_spontaneous || s == Scenario::SimpleBySimple)
            return log_not_r + log_hit(n_inf, beta);
        return log_r + log_escape(n_inf, beta);
    }

    const bool reached = threshold_reached(n_inf, k, need_phi(p));
    if (tr == Transition::Stay)
        return reached ? kNegInf : log_not_r;
    if (!with_spontaneous || s == Scenario::ComplexByComplex)
        return reached ? 0.0 : kNegInf;
    return reached ? kNegInf : log_r;
}

double trajectory_loglik(const EgoObservation& obs, Scenario s, const ModelParams& p, bool with_spontaneous) {
    const Step last = trajectory_adoption_step(obs) - 1; // step whose state drives the adoption
    if (last < 0)
        throw ParameterError("trajectory_loglik: adoption at step 0");
    const std::size_t k = obs.degree();
    std::vector<Step> times;
    times.reserve(k);
    for (const auto& nb : obs.neighbours)
        if (nb.infection_time && *nb.infection_time <= last)
            times.push_back(std::max<Step>(*nb.infection_time, 0));
    std::sort(times.begin(), times.end());

    double total = 0.0;
    auto add_stays = [&](std::size_t n, Step len) {
        if (len > 0 && total != kNegInf)
            total += static_cast<double>(len) * step_loglik(Transition::Stay, n, k, s, p, with_spontaneous);
    };
    std::size_t n = 0;
    Step from = 0;
    for (Step tau : times) {
        add_stays(n, tau - from);
        from = std::max(from, tau);
        ++n;
    }
    add_stays(n, last - from);
    if (total == kNegInf)
        return kNegInf;
    return total + step_loglik(Transition::Adopt, n, k, s, p, with_spontaneous);
}

ClassificationResult decide(const std::array<double, 3>& loglik, std::size_t n_classes) {
    ClassificationResult res;
    res.loglik = loglik;
    std::size_t best = 0;
    for (std::size_t i = 1; i < n_classes; ++i)
        if (loglik[i] > loglik[best])
            best = i;
    double second = kNegInf;
    for (std::size_t i = 0; i < n_classes; ++i)
        if (i != best)
            second = std::max(second, loglik[i]);
    res.predicted = static_cast<Mechanism>(best);
    if (loglik[best] == kNegInf)
        res.margin = 0.0;
    else if (second == kNegInf)
        res.margin = std::numeric_limits<double>::infinity();
    else
        res.margin = loglik[best] - second;
    return res;
}

ClassificationResult classify_known(const EgoObservation& obs, const ModelParams& p, std::size_t n_classes) {
    if (n_classes != 2 && n_classes != 3)
        throw ParameterError("classify_known: n_classes must be 2 or 3");
    need_beta(p);
    need_phi(p);
    std::array<double, 3> ll{kNegInf, kNegInf, kNegInf};
    const bool spont = n_classes == 3;
    ll[index_of(Mechanism::Sm)] = trajectory_loglik(obs, Scenario::SimpleBySimple, p, spont);
    ll[index_of(Mechanism::Cx)] = trajectory_loglik(obs, Scenario::ComplexByComplex, p, spont);
    if (spont)
        ll[index_of(Mechanism::St)] = std::max(trajectory_loglik(obs, Scenario::SimpleBySpontaneous, p, true),
                                               trajectory_loglik(obs, Scenario::ComplexBySpontaneous, p, true));
    return decide(ll, n_classes);
}

EstimatedParams estimate_params(const EgoObservation& obs) {
    const auto f = extract(obs);
    EstimatedParams e;
    if (f[kSumStimuli] >= 1.0)
        e.beta_hat = 1.0 / f[kSumStimuli];
    e.phi_hat = f[kProportionInfected];
    return e;
}

REstimate estimate_r(std::span<const EgoObservation> observations) {
    REstimate out;
    double share = 0.0, st = 0.0, steps = 0.0;
    for (const auto& obs : observations) {
        if (obs.susceptible_steps <= 0)
            continue;
        share += static_cast<double>(obs.exposure_steps) / static_cast<double>(obs.susceptible_steps);
        steps += static_cast<double>(obs.susceptible_steps);
        if (obs.true_label == Mechanism::St)
            st += 1.0;
        ++out.n_used;
    }
    if (out.n_used == 0)
        throw ParameterError("estimate_r: no observation with susceptible time");
    out.literal = share / static_cast<double>(out.n_used);
    out.alternative = st / steps;
    return out;
}

double effective_phi(double phi_hat, std::size_t k) noexcept {
    return std::max(0.0, phi_hat - 0.5 / static_cast<double>(std::max<std::size_t>(k, 1)));
}

ClassificationResult classify_unknown(const EgoObservation& obs, double r_hat) {
    const auto est = estimate_params(obs);
    ModelParams p;
    p.r = r_hat;
    p.phi = effective_phi(est.phi_hat, obs.degree());
    std::array<double, 3> ll{kNegInf, kNegInf, kNegInf};
    ll[index_of(Mechanism::Cx)] = trajectory_loglik(obs, Scenario::ComplexByComplex, p, true);
    double st_cx = trajectory_loglik(obs, Scenario::ComplexBySpontaneous, p, true);
    if (est.beta_hat) {
        p.beta = *est.beta_hat;
        ll[index_of(Mechanism::Sm)] = trajectory_loglik(obs, Scenario::SimpleBySimple, p, true);
        ll[index_of(Mechanism::St)] = std::max(st_cx, trajectory_loglik(obs, Scenario::SimpleBySpontaneous, p, true));
    } else {
        ll[index_of(Mechanism::St)] = st_cx;
    }
    return decide(ll, 3);
}

namespace {

double analytic_accuracy_quiet(std::size_t k, double beta, double phi, double r, bool& unreachable) {
    const std::size_t m = required_infected(k, phi);
    if (m > k) {
        unreachable = true;
        return 1.0;
    }
    auto b = [&](std::size_t n) { return -std::expm1(static_cast<double>(n) * std::log1p(-beta)); };
    auto pn = [&](std::size_t n) { return -std::expm1(static_cast<double>(k - n) * std::log1p(-r)); };
    double prod = 1.0;
    for (std::size_t n = 1; n < m; ++n) {
        const double bn = b(n), p = pn(n);
        const double denom = bn + p - p * bn;
        prod *= denom > 0.0 ? (p - p * bn) / denom : 0.0;
    }
    return 1.0 - 0.5 * prod * b(m);
}

void check_ranges(double beta, double phi, double r) {
    if (!(beta >= 0 && beta <= 1 && phi >= 0 && phi <= 1 && r >= 0 && r <= 1))
        throw ParameterError("analytic_accuracy: parameters must lie in [0,1]");
}

} // namespace

double analytic_accuracy(std::size_t k, double beta, double phi, double r) {
    if (k == 0)
        throw ParameterError("analytic_accuracy: k must be >= 1");
    check_ranges(beta, phi, r);
    bool unreachable = false;
    double acc = analytic_accuracy_quiet(k, beta, phi, r, unreachable);
    if (unreachable)
        warn("analytic_accuracy: threshold unreachable at k=" + std::to_string(k) + ", phi=" +
             std::to_string(phi));
    return acc;
}

double analytic_accuracy(const StarEnsembleSpec& degree_law, double beta, double phi, double r) {
    validate(ModelSpec{degree_law});
    check_ranges(beta, phi, r);
    const double n = static_cast<double>(degree_law.trials), p = degree_law.p;
    const double sd = std::sqrt(n * p * (1 - p));
    const auto k_max = static_cast<std::size_t>(std::ceil(n * p + 20 * sd + 20));
    const auto pmf = truncated_binomial_pmf(degree_law.trials, degree_law.p, k_max);
    double mass = 0.0, acc = 0.0;
    bool unreachable = false;
    for (std::size_t k = 1; k < pmf.size(); ++k) {
        if (pmf[k] <= 0.0)
            continue;
        mass += pmf[k];
        acc += pmf[k] * analytic_accuracy_quiet(k, beta, phi, r, unreachable);
    }
    if (unreachable)
        warn("analytic_accuracy: threshold unreachable for some degrees at phi=" + std::to_string(phi));
    return acc / mass;
}

namespace {

void put_ll(std::ostream& out, double x) {
    if (x == kNegInf)
        out << "-inf";
    else if (std::isinf(x))
        out << "inf";
    else
        out << x;
}

} // namespace

void write_classification_header(std::ostream& out) {
    out << "ego,predicted,true_label,ll_Sm,ll_Cx,ll_St,margin\n";
}

void write_classification_row(std::ostream& out, std::uint64_t ego, const ClassificationResult& res,
                              std::optional<Mechanism> truth) {
    out << ego << ',' << to_string(res.predicted) << ',' << (truth ? to_string(*truth) : "");
    for (double x : res.loglik) {
        out << ',';
        put_ll(out, x);
    }
    out << ',';
    put_ll(out, res.margin);
    out << '\n';
}

} // namespace clens
