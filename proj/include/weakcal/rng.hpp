#pragma once

#include <cstdint>
#include <vector>

namespace weakcal {

// Seeded counter-free generator with explicit child-stream derivation.
// All draws go through next_u64() so results are identical across
// platforms and standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {
        // warm up so that small seeds do not produce correlated streams
        next_u64();
        next_u64();
    }

    // Child stream keyed by an integer; independent of draws made on the
    // parent so far.  child(a) and child(b) are decorrelated for a != b.
    Rng child(std::uint64_t key) const {
        return Rng(mix(seed_ ^ mix(key + 0x9e3779b97f4a7c15ULL)));
    }

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform index in [0,n), n >= 1
    std::size_t index(std::size_t n) {
        // multiply-shift; bias is negligible for n << 2^64
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    std::uint64_t seed_;
};

// Weighted sampler over a fixed set of items, cumulative-sum based.
class DiscreteSampler {
public:
    explicit DiscreteSampler(const std::vector<double>& weights) {
        cum_.reserve(weights.size());
        double total = 0.0;
        for (double w : weights) {
            total += (w > 0.0 ? w : 0.0);
            cum_.push_back(total);
        }
        total_ = total;
    }

    std::size_t sample(Rng& rng) const {
        double u = rng.uniform() * total_;
        std::size_t lo = 0, hi = cum_.size();
        while (lo + 1 < hi) {
            std::size_t mid = (lo + hi) / 2;
            if (cum_[mid - 1] <= u)
                lo = mid;
            else
                hi = mid;
        }
        return lo;
    }

private:
    std::vector<double> cum_;
    double total_ = 0.0;
};

}  // namespace weakcal
