#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakcal/record.hpp"

namespace weakcal {

// (m+1) x K table of signed corrected cell moments plus per-cell active
// mass.  Row g=0 is the whole population.
struct ResidualTable {
    int m = 0;
    int K = 0;
    std::string regime;
    std::vector<double> moments;      // (m+1)*K, row-major by group
    std::vector<double> active_mass;  // same layout

    ResidualTable() = default;
    ResidualTable(int groups, int bins, std::string tag = {})
        : m(groups),
          K(bins),
          regime(std::move(tag)),
          moments(static_cast<std::size_t>(groups + 1) * bins, 0.0),
          active_mass(static_cast<std::size_t>(groups + 1) * bins, 0.0) {}

    std::size_t cell(int g, int b) const {
        return static_cast<std::size_t>(g) * K + (b - 1);
    }
    double& moment(int g, int b) { return moments[cell(g, b)]; }
    double moment(int g, int b) const { return moments[cell(g, b)]; }
    double& mass(int g, int b) { return active_mass[cell(g, b)]; }
    double mass(int g, int b) const { return active_mass[cell(g, b)]; }
};

// Oracle (clean-label) residual estimator:
//   moments[g][b] = (1/n) sum_i a_{g,b}(x_i) (y_i - f(x_i)).
inline ResidualTable residual_pn(std::span<const ScoredRecord> records,
                                 const WitnessFamily& family) {
    if (records.empty()) throw std::invalid_argument("residual_pn: empty input");
    ResidualTable table(family.m, family.K, "pn");
    const double inv_n = 1.0 / static_cast<double>(records.size());
    for (const ScoredRecord& rec : records) {
        if (!rec.label) throw std::invalid_argument("residual_pn: missing label");
        const int b = bin_index(rec.score, family.K);
        const double resid = static_cast<double>(*rec.label) - rec.score;
        for (int g = 0; g <= family.m; ++g) {
            if (!rec.in_group(g)) continue;
            table.moment(g, b) += resid * inv_n;
            table.mass(g, b) += inv_n;
        }
    }
    return table;
}

}  // namespace weakcal
