#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakcal {

// Observation-source tags for weakly supervised bags.
enum class Source {
    none,
    pos,     // positive bag (PU, SU teacher side)
    unl,     // unlabeled / marginal bag
    u1,      // UU mixture source 1
    u2,      // UU mixture source 2
    pconf,   // positive-confidence examples
    sup,     // comparison: superior marginal
    inf,     // comparison: inferior marginal
    sim,     // similar-pair one-point marginal
    dis,     // dissimilar-pair one-point marginal
    pair_a,  // Sconf pair member A
    pair_b,  // Sconf pair member B
};

inline const char* to_string(Source s) {
    switch (s) {
        case Source::pos: return "pos";
        case Source::unl: return "unl";
        case Source::u1: return "u1";
        case Source::u2: return "u2";
        case Source::pconf: return "pconf";
        case Source::sup: return "sup";
        case Source::inf: return "inf";
        case Source::sim: return "sim";
        case Source::dis: return "dis";
        case Source::pair_a: return "pair-a";
        case Source::pair_b: return "pair-b";
        default: return "";
    }
}

inline Source source_from_string(const std::string& s) {
    if (s.empty()) return Source::none;
    if (s == "pos") return Source::pos;
    if (s == "unl") return Source::unl;
    if (s == "u1") return Source::u1;
    if (s == "u2") return Source::u2;
    if (s == "pconf") return Source::pconf;
    if (s == "sup") return Source::sup;
    if (s == "inf") return Source::inf;
    if (s == "sim") return Source::sim;
    if (s == "dis") return Source::dis;
    if (s == "pair-a") return Source::pair_a;
    if (s == "pair-b") return Source::pair_b;
    throw std::invalid_argument("unknown source tag: " + s);
}

// One evaluation unit: a precomputed base score plus group-membership
// flags.  Label, confidence, and source tag are present only when the
// observation model provides them.
struct ScoredRecord {
    double score = 0.0;                  // f(x) in [0,1]
    std::vector<std::uint8_t> groups;    // membership flags, length m
    std::optional<int> label;            // y in {0,1}
    std::optional<double> confidence;    // r(x) in (0,1]
    Source source = Source::none;
    std::optional<std::int64_t> id;      // originating row / pair id

    bool in_group(int g) const {
        if (g == 0) return true;  // g=0 is the whole population
        return g >= 1 && static_cast<std::size_t>(g) <= groups.size() &&
               groups[static_cast<std::size_t>(g) - 1] != 0;
    }
};

// Finite witness family: m subgroups crossed with K uniform score bins.
// Cell index space is (g, b) with g in {0..m} and b in {1..K}.
struct WitnessFamily {
    int m = 0;  // subgroup count (g=0 population row is implicit)
    int K = 10;

    WitnessFamily() = default;
    WitnessFamily(int groups, int bins) : m(groups), K(bins) {
        if (m < 0 || K < 1) throw std::invalid_argument("bad witness family");
    }

    double bin_lo(int b) const { return static_cast<double>(b - 1) / K; }
    double bin_hi(int b) const { return static_cast<double>(b) / K; }
};

// Bin id in {1..K}; bins are [(j-1)/K, j/K), last bin closed at 1.
inline int bin_index(double score, int K) {
    if (!(score >= 0.0 && score <= 1.0))
        throw std::domain_error("bin_index: score outside [0,1]");
    if (score >= 1.0) return K;
    int b = static_cast<int>(score * K) + 1;
    return b > K ? K : b;
}

}  // namespace weakcal
