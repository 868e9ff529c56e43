#pragma once

#include <algorithm>
#include <cmath>
#include <variant>
#include <vector>

#include "weakcal/record.hpp"

namespace weakcal {

inline constexpr double kLogitEps = 1e-6;

inline double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

inline double logit(double p) {
    p = std::min(1.0 - kLogitEps, std::max(kLogitEps, p));
    return std::log(p / (1.0 - p));
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// Additive correction on one subgroup-bin cell, recorded against the
// score state at the time of the update.
struct CellAdd {
    int group = 0;        // 0 = whole population
    double lo = 0.0;      // bin interval [lo, hi)
    double hi = 1.0;
    double delta = 0.0;

    bool contains(double score) const {
        if (score < lo) return false;
        if (score < hi) return true;
        // last bin is closed at 1
        return hi >= 1.0 && score == 1.0;
    }
};

struct Temperature {
    double beta = 1.0;
};

struct AffineLogit {
    double a = 1.0;
    double b = 0.0;
};

using MapStep = std::variant<CellAdd, Temperature, AffineLogit>;

// Ordered, replayable list of corrections.  Each CellAdd fires against
// the current (partially corrected) score, so application re-derives the
// training trajectory step by step.
struct CalibrationMap {
    std::vector<MapStep> steps;

    bool empty() const { return steps.empty(); }

    double apply(double score, const std::vector<std::uint8_t>& groups) const {
        ScoredRecord rec;
        rec.score = score;
        rec.groups = groups;
        return apply(rec);
    }

    double apply(const ScoredRecord& rec) const {
        double s = rec.score;
        for (const MapStep& step : steps) {
            if (const auto* add = std::get_if<CellAdd>(&step)) {
                if (rec.in_group(add->group) && add->contains(s))
                    s = clip01(s + add->delta);
            } else if (const auto* temp = std::get_if<Temperature>(&step)) {
                s = sigmoid(logit(s) / temp->beta);
            } else {
                const auto& aff = std::get<AffineLogit>(step);
                s = sigmoid(aff.a * logit(s) + aff.b);
            }
        }
        return s;
    }
};

inline double apply_map(const CalibrationMap& map, const ScoredRecord& rec) {
    return map.apply(rec);
}

}  // namespace weakcal
