#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakcal/calibration_map.hpp"
#include "weakcal/decon.hpp"
#include "weakcal/optimize.hpp"
#include "weakcal/record.hpp"
#include "weakcal/residual.hpp"

namespace weakcal {

// --- WLMC boosting ----------------------------------------------------------

struct WlmcConfig {
    double eta = 0.05;            // step size
    int T = 50;                   // max rounds
    double alpha = 0.005;         // stop threshold on max |residual|
    double min_active_mass = 0.01;
    double r_min = 1e-3;          // Pconf confidence floor inside the audit
    bool fresh_batch = false;

    void validate() const {
        if (!(eta > 0.0)) throw std::invalid_argument("wlmc: eta must be > 0");
        if (T < 0) throw std::invalid_argument("wlmc: T must be >= 0");
        if (alpha < 0.0) throw std::invalid_argument("wlmc: alpha must be >= 0");
        if (!(min_active_mass >= 0.0 && min_active_mass < 1.0))
            throw std::invalid_argument("wlmc: min_active_mass outside [0,1)");
    }
};

struct WlmcRound {
    int round = 0;
    int group = 0;
    int bin = 1;
    double bin_lo = 0.0;
    double bin_hi = 1.0;
    double violation = 0.0;  // signed corrected moment of the chosen cell
    double step = 0.0;       // applied delta
};

struct WlmcResult {
    CalibrationMap map;
    std::vector<WlmcRound> trace;
    int rounds = 0;
    double final_max_violation = 0.0;  // gated max |moment| at termination
};

namespace detail {

// Max gated |moment|; tie-break lexicographic (g,b).  Returns found=false
// when every cell is below the mass gate.
struct AuditPick {
    bool found = false;
    int group = 0;
    int bin = 1;
    double violation = 0.0;
};

inline AuditPick pick_worst_cell(const ResidualTable& table, double min_mass) {
    AuditPick pick;
    double best = -1.0;
    for (int g = 0; g <= table.m; ++g)
        for (int b = 1; b <= table.K; ++b) {
            if (table.mass(g, b) < min_mass) continue;
            const double v = std::abs(table.moment(g, b));
            if (v > best) {
                best = v;
                pick = {true, g, b, table.moment(g, b)};
            }
        }
    return pick;
}

}  // namespace detail

// Finite-basis weak-label multicalibration boost.  Each round audits the
// corrected residual table on the current working scores, picks the worst
// mass-gated cell, and applies a clipped additive step to that cell.
// Fixed-split mode reuses the given bags; fresh-batch mode draws new bags
// every round and replays the accumulated map onto them.
inline WlmcResult wlmc_fit(const DecontaminationSpec& spec, const WeakBags& bags,
                           const WitnessFamily& family, const WlmcConfig& cfg,
                           std::function<WeakBags()> fresh_sampler = nullptr) {
    cfg.validate();
    if (cfg.fresh_batch && !fresh_sampler)
        throw std::invalid_argument("wlmc: fresh_batch requires a sampler");

    // Pconf audits lower-clip confidences at r_min.
    const DecontaminationSpec* audit_spec = &spec;
    DecontaminationSpec clipped;
    if (spec.regime == "pconf" && cfg.r_min > 0.0) {
        clipped = spec_pconf(spec.pi_plus, cfg.r_min);
        audit_spec = &clipped;
    }

    WlmcResult result;
    WeakBags working = cfg.fresh_batch ? fresh_sampler() : bags;

    for (int t = 0; t < cfg.T; ++t) {
        if (cfg.fresh_batch && t > 0) {
            working = fresh_sampler();
            for (auto& [tag, records] : working.bags)
                for (ScoredRecord& rec : records) rec.score = result.map.apply(rec);
        }
        const ResidualTable table =
            corrected_residual(*audit_spec, working, family);
        const auto pick = detail::pick_worst_cell(table, cfg.min_active_mass);
        result.final_max_violation = pick.found ? std::abs(pick.violation) : 0.0;
        if (!pick.found || std::abs(pick.violation) <= cfg.alpha) break;

        CellAdd step;
        step.group = pick.group;
        step.lo = family.bin_lo(pick.bin);
        step.hi = family.bin_hi(pick.bin);
        step.delta = cfg.eta * (pick.violation > 0.0 ? 1.0 : -1.0);
        result.map.steps.push_back(step);
        result.trace.push_back({t, pick.group, pick.bin, step.lo, step.hi,
                                pick.violation, step.delta});
        result.rounds = t + 1;

        if (!cfg.fresh_batch) {
            for (auto& [tag, records] : working.bags)
                for (ScoredRecord& rec : records)
                    if (rec.in_group(step.group) && step.contains(rec.score))
                        rec.score = clip01(rec.score + step.delta);
        }
    }

    // Report the post-termination audit value when T rounds were used.
    if (result.rounds == cfg.T && cfg.T > 0 && !cfg.fresh_batch) {
        const ResidualTable table =
            corrected_residual(*audit_spec, working, family);
        const auto pick = detail::pick_worst_cell(table, cfg.min_active_mass);
        result.final_max_violation = pick.found ? std::abs(pick.violation) : 0.0;
    }
    return result;
}

// --- Corrected weak NLL objectives ------------------------------------------

struct WeakNllObjective {
    std::string regime;  // pn | pu | nnpu | uu | pconf
    double pi_plus = 0.5;
    double gamma1 = 0.0;  // uu only
    double gamma2 = 0.0;
    std::optional<double> tau;  // pconf clipping, off by default
};

// Transform maps a base score to the candidate corrected probability.
using ScoreTransform = std::function<double(double)>;

namespace detail {

inline double loss_pos(double g) {
    return -std::log(std::min(1.0 - kLogitEps, std::max(kLogitEps, g)));
}
inline double loss_neg(double g) {
    return -std::log(std::min(1.0 - kLogitEps, std::max(kLogitEps, 1.0 - g)));
}

struct PuComponents {
    double pos_risk = 0.0;  // pi+ * mean_pos l+
    double neg_risk = 0.0;  // mean_unl l-  -  pi+ * mean_pos l-
};

inline PuComponents pu_components(const WeakNllObjective& obj, const WeakBags& bags,
                                  const ScoreTransform& transform) {
    const auto& pos = bags.at(Source::pos);
    const auto& unl = bags.at(Source::unl);
    double pos_lp = 0.0, pos_ln = 0.0, unl_ln = 0.0;
    for (const ScoredRecord& rec : pos) {
        const double g = transform(rec.score);
        pos_lp += loss_pos(g);
        pos_ln += loss_neg(g);
    }
    for (const ScoredRecord& rec : unl) unl_ln += loss_neg(transform(rec.score));
    pos_lp /= static_cast<double>(pos.size());
    pos_ln /= static_cast<double>(pos.size());
    unl_ln /= static_cast<double>(unl.size());
    return {obj.pi_plus * pos_lp, unl_ln - obj.pi_plus * pos_ln};
}

}  // namespace detail

inline double weak_nll(const WeakNllObjective& obj, const WeakBags& bags,
                       const ScoreTransform& transform) {
    if (obj.regime == "pn") {
        const auto& records = bags.at(Source::unl);
        double total = 0.0;
        for (const ScoredRecord& rec : records) {
            if (!rec.label) throw std::invalid_argument("pn nll: missing label");
            const double g = transform(rec.score);
            total += *rec.label ? detail::loss_pos(g) : detail::loss_neg(g);
        }
        return total / static_cast<double>(records.size());
    }
    if (obj.regime == "pu") {
        const auto comp = detail::pu_components(obj, bags, transform);
        return comp.pos_risk + comp.neg_risk;
    }
    if (obj.regime == "nnpu") {
        const auto comp = detail::pu_components(obj, bags, transform);
        return comp.pos_risk + std::max(0.0, comp.neg_risk);
    }
    if (obj.regime == "uu") {
        const double delta = 1.0 - obj.gamma1 - obj.gamma2;
        if (delta == 0.0) throw std::invalid_argument("uu nll: singular mixture");
        const double pi_minus = 1.0 - obj.pi_plus;
        const auto& u1 = bags.at(Source::u1);
        const auto& u2 = bags.at(Source::u2);
        double total1 = 0.0, total2 = 0.0;
        for (const ScoredRecord& rec : u1) {
            const double g = transform(rec.score);
            total1 += (1.0 - obj.gamma2) * obj.pi_plus * detail::loss_pos(g) -
                      obj.gamma2 * pi_minus * detail::loss_neg(g);
        }
        for (const ScoredRecord& rec : u2) {
            const double g = transform(rec.score);
            total2 += -obj.gamma1 * obj.pi_plus * detail::loss_pos(g) +
                      (1.0 - obj.gamma1) * pi_minus * detail::loss_neg(g);
        }
        return (total1 / static_cast<double>(u1.size()) +
                total2 / static_cast<double>(u2.size())) /
               delta;
    }
    if (obj.regime == "pconf") {
        const auto& records = bags.at(Source::pconf);
        double total = 0.0;
        for (const ScoredRecord& rec : records) {
            double r = detail::require_confidence(rec);
            if (obj.tau)
                r = std::max(r, *obj.tau);
            else if (r <= 0.0)
                throw std::domain_error("pconf nll: nonpositive confidence");
            const double g = transform(rec.score);
            total += detail::loss_pos(g) +
                     (1.0 - r) / r * detail::loss_neg(g);
        }
        return obj.pi_plus * total / static_cast<double>(records.size());
    }
    throw std::invalid_argument("weak_nll: unknown regime " + obj.regime);
}

// --- Temperature and Platt fitting ------------------------------------------

inline constexpr double kTempLo = 1e-2;
inline constexpr double kTempHi = 1e2;
inline constexpr double kPlattBound = 50.0;

struct TemperatureFit {
    double beta = 1.0;
    double objective = 0.0;
    bool converged = false;
};

// Bounded 1D minimization of the weak NLL over beta, on a log scale so
// that both bracket ends are resolved equally.
inline TemperatureFit fit_temperature(const WeakNllObjective& obj,
                                      const WeakBags& bags, int max_iters = 200) {
    auto objective = [&](double log_beta) {
        const double beta = std::pow(10.0, log_beta);
        return weak_nll(obj, bags,
                        [beta](double s) { return sigmoid(logit(s) / beta); });
    };
    const auto r = golden_section_min(objective, std::log10(kTempLo),
                                      std::log10(kTempHi), max_iters, 1e-8);
    if (!std::isfinite(r.fx))
        throw std::domain_error("fit_temperature: objective not finite");
    return {std::pow(10.0, r.x), r.fx, r.converged};
}

struct PlattFit {
    double a = 1.0;
    double b = 0.0;
    double objective = 0.0;
    bool converged = false;
};

// Bounded simplex minimization over (a, b), deterministic start at (1, 0).
// Separable data pushes a parameter to the box bound; the clipped bound is
// returned with converged=false when the simplex is still moving.
inline PlattFit fit_platt(const WeakNllObjective& obj, const WeakBags& bags,
                          int max_iters = 250) {
    auto objective = [&](double a, double b) {
        return weak_nll(obj, bags, [a, b](double s) {
            return sigmoid(a * logit(s) + b);
        });
    };
    const auto r = nelder_mead_2d(objective, 1.0, 0.0, -kPlattBound, kPlattBound,
                                  -kPlattBound, kPlattBound, max_iters);
    if (!std::isfinite(r.fxy))
        throw std::domain_error("fit_platt: objective not finite");
    return {r.x, r.y, r.fxy, r.converged};
}

}  // namespace weakcal
