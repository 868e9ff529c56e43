#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "weakcal/calibration_map.hpp"
#include "weakcal/decon.hpp"
#include "weakcal/record.hpp"
#include "weakcal/rng.hpp"

namespace weakcal {

// Split-first protocol: test is carved out first with its own seed, then
// validation, then the correction split inside the training partition.
struct SplitPlan {
    double test_fraction = 0.2;
    double val_fraction = 0.2;
    double correction_fraction = 0.4;  // of the train partition
    std::uint64_t test_seed = 42;
    std::uint64_t correction_seed = 50;
    std::uint64_t run_seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> correction;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

namespace detail {

inline std::vector<std::size_t> take_shuffled(std::vector<std::size_t>& pool,
                                              std::size_t count,
                                              std::uint64_t seed) {
    Rng rng(seed);
    rng.shuffle(pool);
    std::vector<std::size_t> taken(pool.begin(),
                                   pool.begin() + static_cast<std::ptrdiff_t>(count));
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    return taken;
}

}  // namespace detail

inline SplitIndices split(std::size_t n, const SplitPlan& plan) {
    auto frac_ok = [](double f) { return f > 0.0 && f < 1.0; };
    if (!frac_ok(plan.test_fraction) || !frac_ok(plan.val_fraction) ||
        !frac_ok(plan.correction_fraction))
        throw std::invalid_argument("split: fractions must lie in (0,1)");

    const auto n_test =
        static_cast<std::size_t>(std::llround(plan.test_fraction * n));
    const auto n_val =
        static_cast<std::size_t>(std::llround(plan.val_fraction * n));
    if (n_test == 0 || n_val == 0 || n_test + n_val >= n)
        throw std::invalid_argument("split: infeasible fractions for n");

    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);

    SplitIndices out;
    out.test = detail::take_shuffled(pool, n_test, plan.test_seed);
    out.validation = detail::take_shuffled(pool, n_val, plan.run_seed);
    const auto n_corr = static_cast<std::size_t>(
        std::llround(plan.correction_fraction * pool.size()));
    if (n_corr == 0 || n_corr >= pool.size())
        throw std::invalid_argument("split: infeasible correction fraction");
    out.correction = detail::take_shuffled(pool, n_corr, plan.correction_seed);
    out.train = std::move(pool);
    return out;
}

inline std::vector<ScoredRecord> select(std::span<const ScoredRecord> records,
                                        std::span<const std::size_t> indices) {
    std::vector<ScoredRecord> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(records[i]);
    return out;
}

// Semi-synthetic view parameters; rates are draw counts relative to the
// originating split size.
struct WeakViewParams {
    double lambda_p = 0.5;  // PU positive rate
    double lambda_u = 1.0;  // PU unlabeled rate
    double gamma1 = 0.2;    // UU target contamination
    double gamma2 = 0.2;
    double lambda_1 = 1.0;  // UU source rates
    double lambda_2 = 1.0;
};

struct WeakView {
    WeakBags bags;
    double pi_hat = 0.0;  // exact positive fraction of the originating split
};

namespace detail {

inline std::vector<std::size_t> label_pool(std::span<const ScoredRecord> records,
                                           int label) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].label && *records[i].label == label) pool.push_back(i);
    return pool;
}

inline double positive_fraction(std::span<const ScoredRecord> records) {
    std::size_t pos = 0;
    for (const ScoredRecord& rec : records) {
        if (!rec.label) throw std::invalid_argument("weak view: missing label");
        pos += static_cast<std::size_t>(*rec.label);
    }
    return static_cast<double>(pos) / static_cast<double>(records.size());
}

// Draw `count` records with replacement from the index pool; labels are
// hidden in the emitted bag, ids preserved.
inline std::vector<ScoredRecord> draw_bag(std::span<const ScoredRecord> records,
                                          std::span<const std::size_t> pool,
                                          std::size_t count, Source tag, Rng& rng) {
    std::vector<ScoredRecord> bag;
    bag.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        ScoredRecord rec = records[pool[rng.index(pool.size())]];
        rec.label.reset();
        rec.confidence.reset();
        rec.source = tag;
        bag.push_back(std::move(rec));
    }
    return bag;
}

}  // namespace detail

// PU view: positive bag resampled from split positives, unlabeled bag
// from the whole split; two independent child streams, all draws with
// replacement.
inline WeakView make_pu(std::span<const ScoredRecord> records,
                        const WeakViewParams& params, Rng& rng) {
    const auto positives = detail::label_pool(records, 1);
    if (positives.empty()) throw std::invalid_argument("make_pu: no positives");
    const auto n_p = static_cast<std::size_t>(
        std::llround(params.lambda_p * static_cast<double>(positives.size())));
    const auto n_u = static_cast<std::size_t>(
        std::llround(params.lambda_u * static_cast<double>(records.size())));

    std::vector<std::size_t> all(records.size());
    std::iota(all.begin(), all.end(), 0);

    Rng rng_pos = rng.child(1);
    Rng rng_unl = rng.child(2);
    WeakView view;
    view.pi_hat = detail::positive_fraction(records);
    view.bags[Source::pos] =
        detail::draw_bag(records, positives, n_p, Source::pos, rng_pos);
    view.bags[Source::unl] =
        detail::draw_bag(records, all, n_u, Source::unl, rng_unl);
    return view;
}

// UU view: two mixture sources with target positive fractions 1-gamma1
// and gamma2.  Composition uses exact rounding, remainder from the other
// pool; draws with replacement, then shuffled.
inline WeakView make_uu(std::span<const ScoredRecord> records,
                        const WeakViewParams& params, Rng& rng) {
    const auto positives = detail::label_pool(records, 1);
    const auto negatives = detail::label_pool(records, 0);
    if (positives.empty() || negatives.empty())
        throw std::invalid_argument("make_uu: a class pool is empty");

    auto make_source = [&](double lambda, double pos_frac, Source tag,
                           Rng source_rng) {
        const auto n = static_cast<std::size_t>(
            std::llround(lambda * static_cast<double>(records.size())));
        const auto n_pos = static_cast<std::size_t>(
            std::llround(pos_frac * static_cast<double>(n)));
        auto bag = detail::draw_bag(records, positives, n_pos, tag, source_rng);
        auto neg = detail::draw_bag(records, negatives, n - n_pos, tag, source_rng);
        bag.insert(bag.end(), neg.begin(), neg.end());
        source_rng.shuffle(bag);
        return bag;
    };

    WeakView view;
    view.pi_hat = detail::positive_fraction(records);
    view.bags[Source::u1] =
        make_source(params.lambda_1, 1.0 - params.gamma1, Source::u1, rng.child(1));
    view.bags[Source::u2] =
        make_source(params.lambda_2, params.gamma2, Source::u2, rng.child(2));
    return view;
}

// Pconf view: every split positive, carrying the teacher confidence.
inline WeakView make_pconf(
    std::span<const ScoredRecord> records,
    const std::function<double(const ScoredRecord&)>& teacher) {
    const auto positives = detail::label_pool(records, 1);
    if (positives.empty()) throw std::invalid_argument("make_pconf: no positives");
    WeakView view;
    view.pi_hat = detail::positive_fraction(records);
    auto& bag = view.bags[Source::pconf];
    bag.reserve(positives.size());
    for (std::size_t i : positives) {
        ScoredRecord rec = records[i];
        const double r = teacher(rec);
        if (!(r > 0.0 && r <= 1.0))
            throw std::invalid_argument("make_pconf: teacher score outside (0,1]");
        rec.label.reset();
        rec.confidence = r;
        rec.source = Source::pconf;
        bag.push_back(std::move(rec));
    }
    return view;
}

// --- Weak validation losses -------------------------------------------------

namespace detail {

inline double logistic_pos(double s) {
    // log(1 + e^{-s})
    return s >= 0.0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
}
inline double logistic_neg(double s) { return logistic_pos(-s); }

}  // namespace detail

// Weak validation criterion over a candidate's scores.  Candidate scores
// live in the bag records' score field; logits are taken through the
// clipped logit.  PN returns accuracy (to be maximized); the weak regimes
// return a corrected logistic loss (to be minimized).
inline double weak_val_loss(const std::string& regime, const WeakBags& bags,
                            double pi_hat, double gamma1 = 0.2,
                            double gamma2 = 0.2,
                            std::optional<double> tau = std::nullopt) {
    if (regime == "pn") {
        const auto& records = bags.at(Source::unl);
        double correct = 0.0;
        for (const ScoredRecord& rec : records) {
            if (!rec.label) throw std::invalid_argument("pn val: missing label");
            correct += ((rec.score >= 0.5 ? 1 : 0) == *rec.label) ? 1.0 : 0.0;
        }
        return correct / static_cast<double>(records.size());
    }
    if (regime == "pu") {
        const auto& pos = bags.at(Source::pos);
        const auto& unl = bags.at(Source::unl);
        double pos_term = 0.0, unl_term = 0.0;
        for (const ScoredRecord& rec : pos) {
            const double s = logit(rec.score);
            pos_term += detail::logistic_pos(s) - detail::logistic_neg(s);
        }
        for (const ScoredRecord& rec : unl)
            unl_term += detail::logistic_neg(logit(rec.score));
        return pi_hat * pos_term / static_cast<double>(pos.size()) +
               unl_term / static_cast<double>(unl.size());
    }
    if (regime == "uu") {
        const double delta = 1.0 - gamma1 - gamma2;
        if (delta == 0.0) throw std::invalid_argument("uu val: singular mixture");
        const auto& u1 = bags.at(Source::u1);
        const auto& u2 = bags.at(Source::u2);
        double lp1 = 0.0, ln1 = 0.0, lp2 = 0.0, ln2 = 0.0;
        for (const ScoredRecord& rec : u1) {
            const double s = logit(rec.score);
            lp1 += detail::logistic_pos(s);
            ln1 += detail::logistic_neg(s);
        }
        for (const ScoredRecord& rec : u2) {
            const double s = logit(rec.score);
            lp2 += detail::logistic_pos(s);
            ln2 += detail::logistic_neg(s);
        }
        lp1 /= static_cast<double>(u1.size());
        ln1 /= static_cast<double>(u1.size());
        lp2 /= static_cast<double>(u2.size());
        ln2 /= static_cast<double>(u2.size());
        return pi_hat * ((1.0 - gamma2) / delta * lp1 - gamma1 / delta * lp2) +
               (1.0 - pi_hat) *
                   (-gamma2 / delta * ln1 + (1.0 - gamma1) / delta * ln2);
    }
    if (regime == "pconf") {
        const auto& records = bags.at(Source::pconf);
        double total = 0.0;
        for (const ScoredRecord& rec : records) {
            double r = detail::require_confidence(rec);
            if (tau)
                r = std::max(r, *tau);
            else if (r <= 0.0)
                throw std::domain_error("pconf val: nonpositive confidence");
            const double s = logit(rec.score);
            total += detail::logistic_pos(s) +
                     (1.0 - r) / r * detail::logistic_neg(s);
        }
        return pi_hat * total / static_cast<double>(records.size());
    }
    throw std::invalid_argument("weak_val_loss: unknown regime " + regime);
}

}  // namespace weakcal
