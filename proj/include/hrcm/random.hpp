#pragma once
//
// Counter-based random streams (Philox4x32-10) addressed by (seed, stream id).
// Two streams with distinct ids never share a counter block, so block-level
// streams can be created anywhere, in any order, on any thread.
//

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace hrcm {

// SplitMix64 finalizer; used to fold structured ids into one 64-bit word.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = 0x6A09E667F3BCC909ull;
    for (auto w : words)
        h = mix64(h ^ mix64(w));
    return h;
}

// One Philox4x32-10 block: 4 output words for a 128-bit counter and 64-bit key.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t seed, std::uint64_t stream_id) : key_(seed), stream_(stream_id) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    // Uniform integer in [0, n); n > 0. Lemire's multiply-shift with rejection.
    std::uint64_t uniform_index(std::uint64_t n);

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    std::uint64_t seed() const { return key_; }
    std::uint64_t stream_id() const { return stream_; }
    std::uint64_t draws() const { return counter_; }

private:
    void refill();

    std::uint64_t key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0; // number of 128-bit blocks generated so far
    std::array<std::uint32_t, 4> buffer_{};
    int available_ = 0; // 64-bit words left in buffer_
};

// Identifies one random consumer inside a run: a block (level, target cell,
// source cell) and the purpose of the draws (row sampling, column sampling, ...).
struct StreamId {
    std::uint64_t level = 0;
    std::uint64_t target_key = 0;
    std::uint64_t source_key = 0;
    std::uint64_t purpose = 0;

    std::uint64_t value() const { return hash_words({level, target_key, source_key, purpose}); }
};

inline RandomStream derive_stream(std::uint64_t seed, const StreamId& id) {
    return RandomStream(seed, id.value());
}

inline RandomStream derive_stream(std::uint64_t seed, std::uint64_t id) { return RandomStream(seed, id); }

// Seed for the i-th independent realization of a randomized run.
inline std::uint64_t realization_seed(std::uint64_t seed, std::uint64_t realization) {
    return hash_words({seed, 0x5EEDull, realization});
}

} // namespace hrcm
