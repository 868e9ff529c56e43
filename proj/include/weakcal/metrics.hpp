#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "weakcal/residual.hpp"

namespace weakcal {

// ECE: absolute sum of the population-row moments.
inline double ece(const ResidualTable& table) {
    if (table.K == 0) throw std::invalid_argument("ece: empty table");
    double total = 0.0;
    for (int b = 1; b <= table.K; ++b) total += std::abs(table.moment(0, b));
    return total;
}

struct MaxEceResult {
    double value = 0.0;
    int group = 0;  // arg-group, in {1..m}
};

// maxECE: worst mass-normalized subgroup row over groups with mass above
// mu_min (g=0 excluded).  Ties break to the smallest group id; zero-mass
// groups are always excluded.
inline MaxEceResult max_ece(const ResidualTable& table,
                            std::span<const double> masses, double mu_min = 0.0) {
    if (static_cast<int>(masses.size()) != table.m)
        throw std::invalid_argument("max_ece: mass vector length mismatch");
    MaxEceResult best;
    bool found = false;
    for (int g = 1; g <= table.m; ++g) {
        const double mu = masses[static_cast<std::size_t>(g) - 1];
        if (!(mu > mu_min) || mu <= 0.0) continue;
        double row = 0.0;
        for (int b = 1; b <= table.K; ++b) row += std::abs(table.moment(g, b));
        row /= mu;
        if (!found || row > best.value) {
            best = {row, g};
            found = true;
        }
    }
    if (!found) throw std::invalid_argument("max_ece: no eligible group");
    return best;
}

struct McResult {
    double value = 0.0;
    int group = 0;
    int bin = 1;
};

// MC: max absolute cell moment over all rows including g=0.  Ties break
// to the lexicographically smallest (g,b).
inline McResult mc(const ResidualTable& table) {
    if (table.moments.empty()) throw std::invalid_argument("mc: empty table");
    McResult best{-1.0, 0, 1};
    for (int g = 0; g <= table.m; ++g)
        for (int b = 1; b <= table.K; ++b) {
            const double v = std::abs(table.moment(g, b));
            if (v > best.value) best = {v, g, b};
        }
    return best;
}

struct MetricReport {
    std::string regime;
    double ece = 0.0;
    MaxEceResult max_ece;
    McResult mc;
    double mu_min = 0.0;
};

inline MetricReport metric_report(const ResidualTable& table,
                                  std::span<const double> masses,
                                  double mu_min = 0.0) {
    MetricReport report;
    report.regime = table.regime;
    report.ece = ece(table);
    report.max_ece = max_ece(table, masses, mu_min);
    report.mc = mc(table);
    report.mu_min = mu_min;
    return report;
}

}  // namespace weakcal
