#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace weakcal {

struct Min1dResult {
    double x = 0.0;
    double fx = 0.0;
    bool converged = false;
};

// Bounded golden-section minimization.  Deterministic; a flat objective
// returns the bracket midpoint.
template <typename F>
Min1dResult golden_section_min(F&& f, double lo, double hi, int max_iters,
                               double xtol = 1e-10) {
    if (!(lo < hi)) throw std::invalid_argument("golden_section: bad bracket");
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    const double mid0 = 0.5 * (lo + hi);
    const double fmid0 = f(mid0);
    bool flat = (f1 == f2) && (f1 == fmid0);
    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
        if (b - a <= xtol * (1.0 + std::abs(a) + std::abs(b))) {
            converged = true;
            break;
        }
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2);
        }
        if (flat && f1 != f2) flat = false;
    }
    if (flat) return {mid0, fmid0, true};
    const double x = (f1 < f2) ? x1 : x2;
    return {x, std::min(f1, f2), converged};
}

struct Min2dResult {
    double x = 0.0;
    double y = 0.0;
    double fxy = 0.0;
    bool converged = false;
};

// Bounded downhill-simplex minimization in 2D.  Points are clipped into
// the box; deterministic given the start.
template <typename F>
Min2dResult nelder_mead_2d(F&& f, double x0, double y0, double xlo, double xhi,
                           double ylo, double yhi, int max_iters,
                           double ftol = 1e-12) {
    auto clamp = [&](std::array<double, 2> p) {
        p[0] = std::min(xhi, std::max(xlo, p[0]));
        p[1] = std::min(yhi, std::max(ylo, p[1]));
        return p;
    };
    auto eval = [&](const std::array<double, 2>& p) { return f(p[0], p[1]); };

    std::array<std::array<double, 2>, 3> pts = {
        clamp({x0, y0}),
        clamp({x0 + 0.25 * (xhi - xlo) * 0.01 + 0.1, y0}),
        clamp({x0, y0 + 0.25 * (yhi - ylo) * 0.01 + 0.1}),
    };
    std::array<double, 3> fv = {eval(pts[0]), eval(pts[1]), eval(pts[2])};

    auto order = [&]() {
        // insertion sort of 3 vertices, stable
        for (int i = 1; i < 3; ++i)
            for (int j = i; j > 0 && fv[j] < fv[j - 1]; --j) {
                std::swap(fv[j], fv[j - 1]);
                std::swap(pts[j], pts[j - 1]);
            }
    };
    order();

    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
        if (std::abs(fv[2] - fv[0]) <=
            ftol * (1.0 + std::abs(fv[0]) + std::abs(fv[2]))) {
            converged = true;
            break;
        }
        const std::array<double, 2> centroid = {0.5 * (pts[0][0] + pts[1][0]),
                                                0.5 * (pts[0][1] + pts[1][1])};
        auto at = [&](double t) {
            return clamp({centroid[0] + t * (centroid[0] - pts[2][0]),
                          centroid[1] + t * (centroid[1] - pts[2][1])});
        };
        const auto refl = at(1.0);
        const double frefl = eval(refl);
        if (frefl < fv[0]) {
            const auto expd = at(2.0);
            const double fexpd = eval(expd);
            if (fexpd < frefl) {
                pts[2] = expd;
                fv[2] = fexpd;
            } else {
                pts[2] = refl;
                fv[2] = frefl;
            }
        } else if (frefl < fv[1]) {
            pts[2] = refl;
            fv[2] = frefl;
        } else {
            const auto ctr = at(frefl < fv[2] ? 0.5 : -0.5);
            const double fctr = eval(ctr);
            if (fctr < std::min(frefl, fv[2])) {
                pts[2] = ctr;
                fv[2] = fctr;
            } else {
                // shrink toward the best vertex
                for (int i = 1; i < 3; ++i) {
                    pts[i] = clamp({0.5 * (pts[i][0] + pts[0][0]),
                                    0.5 * (pts[i][1] + pts[0][1])});
                    fv[i] = eval(pts[i]);
                }
            }
        }
        order();
    }
    return {pts[0][0], pts[0][1], fv[0], converged};
}

}  // namespace weakcal
