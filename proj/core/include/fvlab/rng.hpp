#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fvlab {

// xoshiro256++ with splitmix64 seeding. Self-contained so that seeded runs
// are bit-reproducible regardless of the standard library in use.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // uniform in [0, 1)
    double uniform();

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi);

    // standard normal via Box-Muller (cached spare)
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    // k distinct indices drawn from [0, n)
    std::vector<int> sample_indices(int n, int k);

private:
    uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed, a purpose tag and an
// index. Used so every sampling site in the pipeline owns its own stream.
uint64_t mix_seed(uint64_t base, std::string_view tag, uint64_t index = 0);

// FNV-1a over arbitrary bytes; the project-wide content digest.
class Digest {
public:
    void update(const void* data, size_t n);
    void update(std::string_view s) { update(s.data(), s.size()); }
    template <typename T>
    void update_value(const T& v) {
        update(&v, sizeof(T));
    }
    uint64_t value() const noexcept { return h_; }
    std::string hex() const;

private:
    uint64_t h_ = 14695981039346656037ull;
};

uint64_t fnv1a64(const void* data, size_t n);
std::string to_hex(uint64_t v);

}  // namespace fvlab
