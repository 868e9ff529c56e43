#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "weakcal/calibration_map.hpp"
#include "weakcal/record.hpp"
#include "weakcal/residual.hpp"
#include "weakcal/rng.hpp"

using namespace weakcal;

namespace {

ScoredRecord rec(double score, std::vector<std::uint8_t> groups = {},
                 std::optional<int> label = std::nullopt) {
    ScoredRecord r;
    r.score = score;
    r.groups = std::move(groups);
    r.label = label;
    return r;
}

// Independent reference: one pass per cell instead of one pass per record.
ResidualTable brute_force_pn(const std::vector<ScoredRecord>& records,
                             const WitnessFamily& family) {
    ResidualTable table(family.m, family.K);
    for (int g = 0; g <= family.m; ++g)
        for (int b = 1; b <= family.K; ++b) {
            double moment = 0.0, mass = 0.0;
            for (const ScoredRecord& r : records) {
                if (!r.in_group(g) || bin_index(r.score, family.K) != b)
                    continue;
                moment += static_cast<double>(*r.label) - r.score;
                mass += 1.0;
            }
            table.moment(g, b) = moment / static_cast<double>(records.size());
            table.mass(g, b) = mass / static_cast<double>(records.size());
        }
    return table;
}

std::vector<ScoredRecord> random_pn_sample(int n, int m, Rng& rng) {
    std::vector<ScoredRecord> records;
    for (int i = 0; i < n; ++i) {
        std::vector<std::uint8_t> groups(static_cast<std::size_t>(m), 0);
        for (auto& g : groups) g = rng.bernoulli(0.5);
        records.push_back(
            rec(rng.uniform(), std::move(groups), rng.bernoulli(0.5) ? 1 : 0));
    }
    return records;
}

}  // namespace

TEST_CASE("bin_index anchors") {
    CHECK(bin_index(0.0, 10) == 1);
    CHECK(bin_index(1.0, 10) == 10);
    CHECK(bin_index(0.35, 10) == 4);
    CHECK(bin_index(0.1, 10) == 2);  // left edge belongs to the upper bin
    CHECK_THROWS_AS(bin_index(-0.01, 10), std::domain_error);
    CHECK_THROWS_AS(bin_index(1.01, 10), std::domain_error);
}

TEST_CASE("bin_index is monotone in score") {
    Rng rng(11);
    for (int k : {1, 2, 7, 10}) {
        int prev = 1;
        for (int i = 0; i <= 1000; ++i) {
            const int b = bin_index(i / 1000.0, k);
            CHECK(b >= prev);
            prev = b;
        }
        CHECK(prev == k);
        (void)rng;
    }
}

TEST_CASE("apply_map anchors") {
    CalibrationMap empty;
    CHECK(apply_map(empty, rec(0.42)) == 0.42);

    CalibrationMap add;
    add.steps.push_back(CellAdd{0, 0.3, 0.4, 0.05});
    CHECK(apply_map(add, rec(0.35)) == doctest::Approx(0.40).epsilon(1e-15));
    CHECK(apply_map(add, rec(0.45)) == 0.45);  // outside the bin

    CalibrationMap temp;
    temp.steps.push_back(Temperature{1.0});
    CHECK(apply_map(temp, rec(0.7)) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("apply_map replays against the current score") {
    // The second step only fires because the first one moved the score
    // into its interval.
    CalibrationMap map;
    map.steps.push_back(CellAdd{0, 0.3, 0.4, 0.05});
    map.steps.push_back(CellAdd{0, 0.4, 0.5, 0.05});
    CHECK(apply_map(map, rec(0.38)) == doctest::Approx(0.48).epsilon(1e-15));
}

TEST_CASE("apply_map group gating and clipping") {
    CalibrationMap map;
    map.steps.push_back(CellAdd{1, 0.9, 1.0, 0.3});
    CHECK(apply_map(map, rec(0.95, {1})) == 1.0);  // clipped
    CHECK(apply_map(map, rec(0.95, {0})) == 0.95);
    CHECK(apply_map(map, rec(1.0, {1})) == 1.0);  // last bin closed at 1
}

TEST_CASE("apply_map displacement bounded by total delta") {
    Rng rng(3);
    CalibrationMap map;
    double total = 0.0;
    for (int i = 0; i < 12; ++i) {
        const double lo = rng.index(10) / 10.0;
        const double delta = (rng.uniform() - 0.5) * 0.1;
        map.steps.push_back(CellAdd{0, lo, lo + 0.1, delta});
        total += std::abs(delta);
    }
    for (int i = 0; i <= 200; ++i) {
        const double s = i / 200.0;
        CHECK(std::abs(apply_map(map, rec(s)) - s) <= total + 1e-15);
    }
}

TEST_CASE("residual_pn two-record anchor") {
    const WitnessFamily family(0, 10);
    std::vector<ScoredRecord> records = {rec(0.2, {}, 1), rec(0.2, {}, 0)};
    const ResidualTable t = residual_pn(records, family);
    CHECK(t.moment(0, 3) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(t.mass(0, 3) == 1.0);
}

TEST_CASE("residual_pn zero-residual degenerate case") {
    const WitnessFamily family(2, 10);
    std::vector<ScoredRecord> records = {rec(1.0, {1, 0}, 1),
                                         rec(1.0, {0, 1}, 1)};
    const ResidualTable t = residual_pn(records, family);
    for (double m : t.moments) CHECK(m == 0.0);
}

TEST_CASE("residual_pn errors") {
    const WitnessFamily family(0, 10);
    std::vector<ScoredRecord> empty;
    CHECK_THROWS(residual_pn(empty, family));
    std::vector<ScoredRecord> unlabeled = {rec(0.5)};
    CHECK_THROWS(residual_pn(unlabeled, family));
}

TEST_CASE("residual_pn equals brute-force reference") {
    Rng rng(2024);
    const WitnessFamily family(4, 10);
    const auto records = random_pn_sample(200, 4, rng);
    const ResidualTable fast = residual_pn(records, family);
    const ResidualTable slow = brute_force_pn(records, family);
    for (std::size_t i = 0; i < fast.moments.size(); ++i) {
        CHECK(fast.moments[i] == doctest::Approx(slow.moments[i]).epsilon(1e-12));
        CHECK(fast.active_mass[i] ==
              doctest::Approx(slow.active_mass[i]).epsilon(1e-12));
    }
}

TEST_CASE("sum rule and mass conservation") {
    Rng rng(5);
    const WitnessFamily family(3, 10);
    const auto records = random_pn_sample(157, 3, rng);
    const ResidualTable t = residual_pn(records, family);

    double mean_y = 0.0, mean_f = 0.0;
    for (const ScoredRecord& r : records) {
        mean_y += static_cast<double>(*r.label);
        mean_f += r.score;
    }
    mean_y /= static_cast<double>(records.size());
    mean_f /= static_cast<double>(records.size());

    double row_sum = 0.0, mass_sum = 0.0;
    for (int b = 1; b <= family.K; ++b) {
        row_sum += t.moment(0, b);
        mass_sum += t.mass(0, b);
    }
    CHECK(row_sum == doctest::Approx(mean_y - mean_f).epsilon(1e-12));
    CHECK(mass_sum == doctest::Approx(1.0).epsilon(1e-12));
}
