#pragma once
#include <cstdint>
#include <limits>

namespace gfn {

// Counter-based generator: output k of stream s is mix(key(seed, s) + k*gamma).
// Streams derived from one master seed never share a counter sequence.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))), ctr_(0) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + (++ctr_) * kGamma); }

    // uniform in [0,1) with 53 random bits
    double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }
    // uniform integer in [0,n)
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t lim = max() - max() % n;
        std::uint64_t x;
        do x = (*this)(); while (x >= lim);
        return x % n;
    }
    Rng split(std::uint64_t stream) const { return Rng(key_, stream); }
    std::uint64_t counter() const { return ctr_; }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_, ctr_;
};

}  // namespace gfn
