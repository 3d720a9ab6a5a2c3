#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "vigil/errors.hpp"

namespace vigil {

// splitmix64 step; used both as a seed mixer and to bootstrap stream state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from (master, lane, index).  Results do
// not depend on evaluation order, which is what makes worker-count-invariant
// sampling possible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t lane, std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s = a ^ (lane * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    std::uint64_t b = splitmix64(s);
    s = b ^ (index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    return splitmix64(s);
}

// xoshiro256++ with hand-rolled distributions.  The standard library's
// distribution objects are implementation-defined, which would break the
// byte-identical-output contract between builds.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inverse-CDF draw over an explicit probability vector, index order fixed
    // by the vector itself.
    int categorical(const Eigen::Ref<const Eigen::VectorXd>& probs) {
        const double u = uniform();
        double acc = 0.0;
        const int n = static_cast<int>(probs.size());
        for (int i = 0; i < n; ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        // Round-off may leave acc slightly below 1; return the last index
        // with positive mass.
        for (int i = n - 1; i >= 0; --i) {
            if (probs[i] > 0.0) return i;
        }
        throw NumericalError("categorical draw from an all-zero vector");
    }

    // Draw over the nonzeros of one column of a sparse column-stochastic matrix.
    template <typename SparseMat>
    int categorical_column(const SparseMat& m, int col) {
        const double u = uniform();
        double acc = 0.0;
        int last = -1;
        for (typename SparseMat::InnerIterator it(m, col); it; ++it) {
            if (it.value() <= 0.0) continue;
            acc += it.value();
            last = static_cast<int>(it.row());
            if (u < acc) return last;
        }
        if (last >= 0) return last;
        throw NumericalError("categorical draw from an all-zero column");
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t state_[4];
};

}  // namespace vigil
