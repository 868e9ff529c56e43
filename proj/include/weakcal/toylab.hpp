#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakcal/decon.hpp"
#include "weakcal/record.hpp"
#include "weakcal/residual.hpp"
#include "weakcal/rng.hpp"

namespace weakcal {

// One-dimensional synthetic world with known predictor f and posterior r,
// X ~ Uniform[0,1], eight equal-width subgroups, ten score bins.
class ToyWorld {
public:
    // Predictor coefficients f(x) = clip(f0 + f1 x); posterior
    // r(x) = clip(f(x) + amp sin(2 pi x), r_lo, r_hi).
    double f0 = 0.12;
    double f1 = 0.76;
    double amp = 0.11;
    double r_lo = 0.02;
    double r_hi = 0.98;
    int grid_n = 400000;

    static constexpr int kGroups = 8;
    static constexpr int kBins = 10;

    ToyWorld() = default;

    // Variant with prevalence away from 1/2, for the regimes whose
    // rewrite divides by pi+ - pi-.
    static ToyWorld skewed() {
        ToyWorld world;
        world.f0 = 0.05;
        world.f1 = 0.55;
        return world;
    }

    double predictor(double x) const {
        const double v = f0 + f1 * x;
        return std::min(1.0 - 1e-6, std::max(1e-6, v));
    }

    double posterior(double x) const {
        const double v = predictor(x) + amp * std::sin(2.0 * std::numbers::pi * x);
        return std::min(r_hi, std::max(r_lo, v));
    }

    static int group_of(double x) {
        int g = static_cast<int>(x * kGroups);
        return g >= kGroups ? kGroups - 1 : g;
    }

    WitnessFamily family() const { return {kGroups, kBins}; }

    ScoredRecord make_record(double x) const {
        ScoredRecord rec;
        rec.score = predictor(x);
        rec.groups.assign(kGroups, 0);
        rec.groups[static_cast<std::size_t>(group_of(x))] = 1;
        return rec;
    }

    double grid_point(int i, int n) const {
        return (static_cast<double>(i) + 0.5) / n;
    }

    // pi+ = E[r(X)], computed once from the grid.
    double pi_plus() const {
        ensure_grid();
        return pi_plus_;
    }

    // Population residual table on the grid: m_{g,b} = E[a_{g,b}(r - f)].
    const ResidualTable& population_table() const {
        ensure_grid();
        return *population_;
    }

    // Unnormalized population MC over the 8x10 subgroup-bin cells.
    double population_mc(int grid_points = 0) const {
        if (grid_points == 0 || grid_points == grid_n) {
            ensure_grid();
            return subgroup_mc(*population_);
        }
        return subgroup_mc(compute_population(grid_points));
    }

    static double subgroup_mc(const ResidualTable& table) {
        double best = 0.0;
        for (int g = 1; g <= table.m; ++g)
            for (int b = 1; b <= table.K; ++b)
                best = std::max(best, std::abs(table.moment(g, b)));
        return best;
    }

    // --- Class-conditional sampling ----------------------------------------

    double sample_marginal(Rng& rng) const { return rng.uniform(); }

    // Weighted resampling from the dense grid with weights r(x) (positive
    // class) or 1 - r(x) (negative class).
    double sample_positive(Rng& rng) const {
        ensure_grid();
        return grid_point(static_cast<int>(pos_sampler_->sample(rng)), grid_n);
    }

    double sample_negative(Rng& rng) const {
        ensure_grid();
        return grid_point(static_cast<int>(neg_sampler_->sample(rng)), grid_n);
    }

    double sample_mixture(double pos_fraction, Rng& rng) const {
        return rng.bernoulli(pos_fraction) ? sample_positive(rng)
                                           : sample_negative(rng);
    }

    // Regime-appropriate bags with n records per source.  Labeled regimes
    // emit labeled records under the unl tag.
    WeakBags sample_world(const std::string& regime, int n, Rng& rng,
                          double rho1 = 0.8, double rho2 = 0.2) const {
        if (n < 1) throw std::invalid_argument("sample_world: n must be >= 1");
        WeakBags bags;
        const double prior = pi_plus();
        const double pi_minus = 1.0 - prior;
        auto emit = [&](Source tag, double x,
                        std::optional<int> label = std::nullopt,
                        std::optional<double> conf = std::nullopt) {
            ScoredRecord rec = make_record(x);
            rec.source = tag;
            rec.label = label;
            rec.confidence = conf;
            bags[tag].push_back(std::move(rec));
        };

        if (regime == "pn") {
            for (int i = 0; i < n; ++i) {
                const double x = sample_marginal(rng);
                emit(Source::unl, x, rng.bernoulli(posterior(x)) ? 1 : 0);
            }
        } else if (regime == "posterior-conf") {
            for (int i = 0; i < n; ++i) {
                const double x = sample_marginal(rng);
                emit(Source::unl, x, std::nullopt, posterior(x));
            }
        } else if (regime == "pconf") {
            for (int i = 0; i < n; ++i) {
                const double x = sample_positive(rng);
                emit(Source::pconf, x, std::nullopt, posterior(x));
            }
        } else if (regime == "pu") {
            for (int i = 0; i < n; ++i) emit(Source::pos, sample_positive(rng));
            for (int i = 0; i < n; ++i) emit(Source::unl, sample_marginal(rng));
        } else if (regime == "uu") {
            for (int i = 0; i < n; ++i)
                emit(Source::u1, sample_mixture(rho1, rng));
            for (int i = 0; i < n; ++i)
                emit(Source::u2, sample_mixture(rho2, rng));
        } else if (regime == "su") {
            const double w = prior * prior / (prior * prior + pi_minus * pi_minus);
            for (int i = 0; i < n; ++i) emit(Source::sim, sample_mixture(w, rng));
            for (int i = 0; i < n; ++i) emit(Source::unl, sample_marginal(rng));
        } else if (regime == "du") {
            for (int i = 0; i < n; ++i) emit(Source::dis, sample_mixture(0.5, rng));
            for (int i = 0; i < n; ++i) emit(Source::unl, sample_marginal(rng));
        } else if (regime == "sd") {
            const double w = prior * prior / (prior * prior + pi_minus * pi_minus);
            for (int i = 0; i < n; ++i) emit(Source::sim, sample_mixture(w, rng));
            for (int i = 0; i < n; ++i) emit(Source::dis, sample_mixture(0.5, rng));
        } else if (regime == "pcomp") {
            // one-point marginals of superior/inferior comparison outcomes
            const double w_sup = prior / (prior + pi_minus * pi_minus);
            const double w_inf = prior * prior / (prior * prior + pi_minus);
            for (int i = 0; i < n; ++i)
                emit(Source::sup, sample_mixture(w_sup, rng));
            for (int i = 0; i < n; ++i)
                emit(Source::inf, sample_mixture(w_inf, rng));
        } else if (regime == "sconf") {
            // pairs drawn iid from the marginal; the shared confidence is
            // the probability that the two hidden labels agree
            for (int i = 0; i < n; ++i) {
                const double xa = sample_marginal(rng);
                const double xb = sample_marginal(rng);
                const double ra = posterior(xa), rb = posterior(xb);
                const double r_pair = ra * rb + (1.0 - ra) * (1.0 - rb);
                emit(Source::pair_a, xa, std::nullopt, r_pair);
                emit(Source::pair_b, xb, std::nullopt, r_pair);
            }
        } else {
            throw std::invalid_argument("sample_world: unknown regime " + regime);
        }
        return bags;
    }

    // Decontamination spec matching a sample_world regime.
    DecontaminationSpec regime_spec(const std::string& regime, double rho1 = 0.8,
                                    double rho2 = 0.2) const {
        const double prior = pi_plus();
        if (regime == "pn") return spec_pn();
        if (regime == "posterior-conf") return spec_posterior_conf();
        if (regime == "pconf") return spec_pconf(prior);
        if (regime == "pu") return spec_pu(prior);
        if (regime == "uu") return spec_uu(prior, 1.0 - rho1, rho2);
        if (regime == "su") return spec_su(prior);
        if (regime == "du") return spec_du(prior);
        if (regime == "sd") return spec_sd(prior);
        if (regime == "pcomp") return spec_pcomp(prior);
        if (regime == "sconf") return spec_sconf(prior);
        throw std::invalid_argument("regime_spec: unknown regime " + regime);
    }

private:
    ResidualTable compute_population(int n) const {
        ResidualTable table(kGroups, kBins, "population");
        const double inv_n = 1.0 / n;
        for (int i = 0; i < n; ++i) {
            const double x = grid_point(i, n);
            const double f = predictor(x);
            const double resid = posterior(x) - f;
            const int b = bin_index(f, kBins);
            const int g = group_of(x) + 1;
            table.moment(0, b) += resid * inv_n;
            table.mass(0, b) += inv_n;
            table.moment(g, b) += resid * inv_n;
            table.mass(g, b) += inv_n;
        }
        return table;
    }

    void ensure_grid() const {
        if (population_) return;
        population_ =
            std::make_unique<ResidualTable>(compute_population(grid_n));
        std::vector<double> wpos(static_cast<std::size_t>(grid_n));
        std::vector<double> wneg(static_cast<std::size_t>(grid_n));
        double total_r = 0.0;
        for (int i = 0; i < grid_n; ++i) {
            const double r = posterior(grid_point(i, grid_n));
            wpos[static_cast<std::size_t>(i)] = r;
            wneg[static_cast<std::size_t>(i)] = 1.0 - r;
            total_r += r;
        }
        pi_plus_ = total_r / grid_n;
        pos_sampler_ = std::make_unique<DiscreteSampler>(wpos);
        neg_sampler_ = std::make_unique<DiscreteSampler>(wneg);
    }

    mutable std::unique_ptr<ResidualTable> population_;
    mutable std::unique_ptr<DiscreteSampler> pos_sampler_;
    mutable std::unique_ptr<DiscreteSampler> neg_sampler_;
    mutable double pi_plus_ = 0.0;
};

// --- Convergence harness ------------------------------------------------

struct ConvergenceRun {
    std::vector<int> sizes = {128,  256,   512,   1024,  2048,
                              4096, 8192, 16384, 32768, 65536};
    int reps = 10;
    std::vector<std::string> regimes = {"pn", "pconf", "pu", "uu"};
    double rho1 = 0.8;
    double rho2 = 0.2;

    void validate() const {
        if (reps < 2) throw std::invalid_argument("convergence: reps must be >= 2");
        for (std::size_t i = 1; i < sizes.size(); ++i)
            if (sizes[i] <= sizes[i - 1])
                throw std::invalid_argument("convergence: sizes must increase");
    }
};

struct ConvergencePoint {
    std::string regime;
    int n = 0;
    double mean_abs_err = 0.0;
    double std_abs_err = 0.0;
};

struct ConvergenceResult {
    std::vector<ConvergencePoint> points;
    std::map<std::string, double> slopes;  // log-log OLS slope per regime
};

// Repeated MC-estimation error against the grid-oracle population MC,
// plus the fitted log10-log10 slope per regime.
inline ConvergenceResult convergence_experiment(const ToyWorld& world,
                                                const ConvergenceRun& run,
                                                Rng& rng) {
    run.validate();
    const double target = world.population_mc();
    const WitnessFamily family = world.family();
    ConvergenceResult result;

    for (std::size_t q = 0; q < run.regimes.size(); ++q) {
        const std::string& regime = run.regimes[q];
        const DecontaminationSpec spec =
            world.regime_spec(regime, run.rho1, run.rho2);
        double sum_logn = 0.0, sum_logerr = 0.0, sum_logn2 = 0.0,
               sum_cross = 0.0;
        for (std::size_t s = 0; s < run.sizes.size(); ++s) {
            const int n = run.sizes[s];
            std::vector<double> errs;
            errs.reserve(static_cast<std::size_t>(run.reps));
            for (int rep = 0; rep < run.reps; ++rep) {
                Rng stream = rng.child((q << 24) ^ (s << 16) ^
                                       static_cast<std::uint64_t>(rep));
                const WeakBags bags =
                    world.sample_world(regime, n, stream, run.rho1, run.rho2);
                const ResidualTable table =
                    corrected_residual(spec, bags, family);
                errs.push_back(std::abs(ToyWorld::subgroup_mc(table) - target));
            }
            double mean = 0.0;
            for (double e : errs) mean += e;
            mean /= static_cast<double>(errs.size());
            double var = 0.0;
            for (double e : errs) var += (e - mean) * (e - mean);
            var /= static_cast<double>(errs.size());
            result.points.push_back({regime, n, mean, std::sqrt(var)});

            const double lx = std::log10(static_cast<double>(n));
            const double ly = std::log10(std::max(mean, 1e-300));
            sum_logn += lx;
            sum_logerr += ly;
            sum_logn2 += lx * lx;
            sum_cross += lx * ly;
        }
        const auto k = static_cast<double>(run.sizes.size());
        result.slopes[regime] = (k * sum_cross - sum_logn * sum_logerr) /
                                (k * sum_logn2 - sum_logn * sum_logn);
    }
    return result;
}

}  // namespace weakcal
