#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakcal/record.hpp"
#include "weakcal/residual.hpp"

namespace weakcal {

// Per-source record lists for one weak-observation model.
struct WeakBags {
    std::map<Source, std::vector<ScoredRecord>> bags;

    std::vector<ScoredRecord>& operator[](Source s) { return bags[s]; }

    const std::vector<ScoredRecord>& at(Source s) const {
        auto it = bags.find(s);
        if (it == bags.end() || it->second.empty())
            throw std::invalid_argument(std::string("missing required source: ") +
                                        to_string(s));
        return it->second;
    }

    bool has(Source s) const {
        auto it = bags.find(s);
        return it != bags.end() && !it->second.empty();
    }
};

// Signed per-record coefficient: alpha(v, record) where v is the current
// score.  The record supplies confidence or label where the observation
// model needs them.
using CoefFn = std::function<double(double v, const ScoredRecord&)>;

struct SourceCoef {
    Source tag = Source::none;
    CoefFn alpha;
};

// Observation-model specification: which sources exist and how each one
// is weighted inside the corrected witness-moment estimator.
struct DecontaminationSpec {
    std::string regime;
    std::vector<SourceCoef> sources;
    double pi_plus = 0.5;
    std::optional<double> gamma1;
    std::optional<double> gamma2;
    std::optional<double> tau;  // Pconf confidence floor
};

namespace detail {

inline void check_prior(double pi_plus) {
    if (!(pi_plus > 0.0 && pi_plus < 1.0))
        throw std::invalid_argument("class prior must lie in (0,1)");
}

inline void check_nonsingular_prior(double pi_plus) {
    check_prior(pi_plus);
    if (pi_plus == 0.5)
        throw std::invalid_argument("singular prior: rewrite divides by pi+ - pi-");
}

inline double require_confidence(const ScoredRecord& rec) {
    if (!rec.confidence)
        throw std::invalid_argument("record is missing a confidence value");
    return *rec.confidence;
}

}  // namespace detail

// Generic corrected witness-moment estimator on the finite family:
//   moments[g][b] = sum_s (1/n_s) sum_{i in s} alpha_s(f_i, rec_i) a_{g,b}(x_i)
// Active mass is the pooled fraction of all observed records per cell.
inline ResidualTable corrected_residual(const DecontaminationSpec& spec,
                                        const WeakBags& bags,
                                        const WitnessFamily& family) {
    if (spec.sources.empty())
        throw std::invalid_argument("spec declares no sources");
    ResidualTable table(family.m, family.K, spec.regime);

    std::size_t n_total = 0;
    for (const SourceCoef& src : spec.sources) n_total += bags.at(src.tag).size();

    for (const SourceCoef& src : spec.sources) {
        const auto& records = bags.at(src.tag);
        const double inv_n = 1.0 / static_cast<double>(records.size());
        for (const ScoredRecord& rec : records) {
            const int b = bin_index(rec.score, family.K);
            const double coef = src.alpha(rec.score, rec) * inv_n;
            for (int g = 0; g <= family.m; ++g) {
                if (!rec.in_group(g)) continue;
                table.moment(g, b) += coef;
                table.mass(g, b) += 1.0 / static_cast<double>(n_total);
            }
        }
    }
    return table;
}

// --- Regime specifications ------------------------------------------------

// Fully supervised residual expressed in spec form: one labeled bag under
// the unl tag with per-record weight (y - v).
inline DecontaminationSpec spec_pn() {
    DecontaminationSpec spec;
    spec.regime = "pn";
    spec.sources.push_back({Source::unl, [](double v, const ScoredRecord& rec) {
                                if (!rec.label)
                                    throw std::invalid_argument(
                                        "pn regime: missing label");
                                return static_cast<double>(*rec.label) - v;
                            }});
    return spec;
}

inline DecontaminationSpec spec_pu(double pi_plus) {
    detail::check_prior(pi_plus);
    DecontaminationSpec spec;
    spec.regime = "pu";
    spec.pi_plus = pi_plus;
    spec.sources.push_back(
        {Source::pos, [pi_plus](double, const ScoredRecord&) { return pi_plus; }});
    spec.sources.push_back(
        {Source::unl, [](double v, const ScoredRecord&) { return -v; }});
    return spec;
}

inline DecontaminationSpec spec_uu(double pi_plus, double gamma1, double gamma2) {
    detail::check_prior(pi_plus);
    const double delta = 1.0 - gamma1 - gamma2;
    if (delta == 0.0)
        throw std::invalid_argument("uu: singular mixture, 1 - gamma1 - gamma2 = 0");
    const double pi_minus = 1.0 - pi_plus;
    DecontaminationSpec spec;
    spec.regime = "uu";
    spec.pi_plus = pi_plus;
    spec.gamma1 = gamma1;
    spec.gamma2 = gamma2;
    spec.sources.push_back({Source::u1, [=](double v, const ScoredRecord&) {
                                return ((1.0 - gamma2) * pi_plus * (1.0 - v) +
                                        gamma2 * pi_minus * v) /
                                       delta;
                            }});
    spec.sources.push_back({Source::u2, [=](double v, const ScoredRecord&) {
                                return (-gamma1 * pi_plus * (1.0 - v) -
                                        (1.0 - gamma1) * pi_minus * v) /
                                       delta;
                            }});
    return spec;
}

inline DecontaminationSpec spec_pconf(double pi_plus,
                                      std::optional<double> tau = std::nullopt) {
    detail::check_prior(pi_plus);
    if (tau && !(*tau > 0.0 && *tau <= 1.0))
        throw std::invalid_argument("pconf: clip floor must lie in (0,1]");
    DecontaminationSpec spec;
    spec.regime = "pconf";
    spec.pi_plus = pi_plus;
    spec.tau = tau;
    spec.sources.push_back({Source::pconf, [pi_plus, tau](double v,
                                                          const ScoredRecord& rec) {
                                double r = detail::require_confidence(rec);
                                if (tau)
                                    r = std::max(r, *tau);
                                else if (r <= 0.0)
                                    throw std::domain_error(
                                        "pconf: nonpositive confidence without clipping");
                                return pi_plus * (1.0 - v / r);
                            }});
    return spec;
}

inline DecontaminationSpec spec_su(double pi_plus) {
    detail::check_nonsingular_prior(pi_plus);
    const double pi_minus = 1.0 - pi_plus;
    const double gap = pi_plus - pi_minus;
    const double c_sim = (pi_plus * pi_plus + pi_minus * pi_minus) / gap;
    DecontaminationSpec spec;
    spec.regime = "su";
    spec.pi_plus = pi_plus;
    spec.sources.push_back(
        {Source::sim, [c_sim](double, const ScoredRecord&) { return c_sim; }});
    spec.sources.push_back({Source::unl, [=](double v, const ScoredRecord&) {
                                return -(pi_minus / gap + v);
                            }});
    return spec;
}

inline DecontaminationSpec spec_du(double pi_plus) {
    detail::check_nonsingular_prior(pi_plus);
    const double pi_minus = 1.0 - pi_plus;
    const double gap = pi_plus - pi_minus;
    const double c_dis = -2.0 * pi_plus * pi_minus / gap;
    DecontaminationSpec spec;
    spec.regime = "du";
    spec.pi_plus = pi_plus;
    spec.sources.push_back(
        {Source::dis, [c_dis](double, const ScoredRecord&) { return c_dis; }});
    spec.sources.push_back({Source::unl, [=](double v, const ScoredRecord&) {
                                return pi_plus / gap - v;
                            }});
    return spec;
}

inline DecontaminationSpec spec_sd(double pi_plus) {
    detail::check_nonsingular_prior(pi_plus);
    const double pi_minus = 1.0 - pi_plus;
    const double gap = pi_plus - pi_minus;
    const double sim_scale = pi_plus * pi_plus + pi_minus * pi_minus;
    DecontaminationSpec spec;
    spec.regime = "sd";
    spec.pi_plus = pi_plus;
    spec.sources.push_back({Source::sim, [=](double v, const ScoredRecord&) {
                                return sim_scale * (pi_plus / gap - v);
                            }});
    spec.sources.push_back({Source::dis, [=](double v, const ScoredRecord&) {
                                return -2.0 * pi_plus * pi_minus *
                                       (pi_minus / gap + v);
                            }});
    return spec;
}

inline DecontaminationSpec spec_pcomp(double pi_plus) {
    detail::check_prior(pi_plus);
    const double pi_minus = 1.0 - pi_plus;
    DecontaminationSpec spec;
    spec.regime = "pcomp";
    spec.pi_plus = pi_plus;
    spec.sources.push_back({Source::sup, [=](double v, const ScoredRecord&) {
                                return 1.0 - pi_minus * v;
                            }});
    spec.sources.push_back({Source::inf, [=](double v, const ScoredRecord&) {
                                return -(pi_minus + pi_plus * v);
                            }});
    return spec;
}

// Posterior-confidence: marginal sample with observed posterior mean r;
// the corrected residual is (r - v) per record.
inline DecontaminationSpec spec_posterior_conf() {
    DecontaminationSpec spec;
    spec.regime = "posterior-conf";
    spec.sources.push_back({Source::unl, [](double v, const ScoredRecord& rec) {
                                return detail::require_confidence(rec) - v;
                            }});
    return spec;
}

// Sconf: pairs carrying a shared similarity confidence, ingested as
// flattened records (tags pair-a / pair-b with a shared pair id).  The
// estimator is the per-pair average of the two members' indicator terms;
// because the engine sums one mean per source tag, each record carries half
// of
//   w1(r) (1 - v) - w0(r) v
// with w1 = (r - pi-)/(pi+ - pi-), w0 = (pi+ - r)/(pi+ - pi-), so that the
// pair-a and pair-b contributions together reconstruct the pair average.
inline DecontaminationSpec spec_sconf(double pi_plus) {
    detail::check_nonsingular_prior(pi_plus);
    const double pi_minus = 1.0 - pi_plus;
    const double gap = pi_plus - pi_minus;
    auto coef = [=](double v, const ScoredRecord& rec) {
        const double r = detail::require_confidence(rec);
        const double w1 = (r - pi_minus) / gap;
        const double w0 = (pi_plus - r) / gap;
        return 0.5 * (w1 * (1.0 - v) - w0 * v);
    };
    DecontaminationSpec spec;
    spec.regime = "sconf";
    spec.pi_plus = pi_plus;
    spec.sources.push_back({Source::pair_a, coef});
    spec.sources.push_back({Source::pair_b, coef});
    return spec;
}

// --- Group-mass estimators for the weak maxECE denominators ----------------

// Empirical group fractions from a covariate pool; uses no labels.
inline std::vector<double> group_mass_eval(std::span<const ScoredRecord> records,
                                           int m) {
    if (records.empty()) throw std::invalid_argument("group_mass: empty source");
    std::vector<double> mu(static_cast<std::size_t>(m), 0.0);
    for (const ScoredRecord& rec : records)
        for (int g = 1; g <= m; ++g)
            if (rec.in_group(g)) mu[g - 1] += 1.0;
    for (double& v : mu) v /= static_cast<double>(records.size());
    return mu;
}

// PU fallback: the unlabeled bag is already drawn from the marginal.
inline std::vector<double> group_mass_pu(const WeakBags& bags, int m) {
    return group_mass_eval(bags.at(Source::unl), m);
}

// Pconf fallback: mu_g = pi+ * mean(1{G_g} / r), same clipping convention
// as the residual estimator.
inline std::vector<double> group_mass_pconf(const WeakBags& bags, double pi_plus,
                                            int m,
                                            std::optional<double> tau = std::nullopt) {
    const auto& records = bags.at(Source::pconf);
    std::vector<double> mu(static_cast<std::size_t>(m), 0.0);
    for (const ScoredRecord& rec : records) {
        double r = detail::require_confidence(rec);
        if (tau)
            r = std::max(r, *tau);
        else if (r <= 0.0)
            throw std::domain_error("pconf mass: nonpositive confidence");
        for (int g = 1; g <= m; ++g)
            if (rec.in_group(g)) mu[g - 1] += 1.0 / r;
    }
    for (double& v : mu) v *= pi_plus / static_cast<double>(records.size());
    return mu;
}

// UU fallback decontaminated from the two mixture sources.
inline std::vector<double> group_mass_uu(const WeakBags& bags, double pi_plus,
                                         double gamma1, double gamma2, int m) {
    const double delta = 1.0 - gamma1 - gamma2;
    if (delta == 0.0)
        throw std::invalid_argument("uu mass: singular mixture");
    auto q1 = group_mass_eval(bags.at(Source::u1), m);
    auto q2 = group_mass_eval(bags.at(Source::u2), m);
    const double c1 = (pi_plus - gamma2) / delta;
    const double c2 = ((1.0 - pi_plus) - gamma1) / delta;
    std::vector<double> mu(static_cast<std::size_t>(m), 0.0);
    for (int g = 0; g < m; ++g) mu[g] = c1 * q1[g] + c2 * q2[g];
    return mu;
}

}  // namespace weakcal
