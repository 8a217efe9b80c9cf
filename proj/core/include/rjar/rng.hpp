#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace rjar {

// Philox 4x32-10 counter-based generator. Each (seed, stream) pair names an
// independent stream, so replication `i` can draw from stream `i` no matter
// which thread runs it and no matter in what order.
class PhiloxStream {
public:
    PhiloxStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : counter_{0u, 0u, static_cast<std::uint32_t>(stream),
                   static_cast<std::uint32_t>(stream >> 32)},
          key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)},
          pos_(4), has_spare_(false), spare_(0.0) {}

    std::uint32_t next_u32() noexcept {
        if (pos_ == 4) {
            block_ = generate(counter_, key_);
            advance_counter();
            pos_ = 0;
        }
        return block_[static_cast<std::size_t>(pos_++)];
    }

    // 53-bit uniform in [0, 1).
    double uniform() noexcept {
        const std::uint64_t hi = next_u32();
        const std::uint64_t lo = next_u32();
        const std::uint64_t bits = ((hi << 32) | lo) >> 11;
        return static_cast<double>(bits) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // One Philox block; exposed for known-answer tests.
    static std::array<std::uint32_t, 4> generate(
        std::array<std::uint32_t, 4> counter,
        std::array<std::uint32_t, 2> key) noexcept {
        for (int round = 0; round < 10; ++round) {
            counter = single_round(counter, key);
            key[0] += 0x9E3779B9u; // Weyl constants
            key[1] += 0xBB67AE85u;
        }
        return counter;
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    static std::array<std::uint32_t, 4> single_round(
        const std::array<std::uint32_t, 4>& ctr,
        const std::array<std::uint32_t, 2>& key) noexcept {
        const std::uint64_t p0 =
            static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
        const std::uint64_t p1 =
            static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        return {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }

    void advance_counter() noexcept {
        if (++counter_[0] == 0u) ++counter_[1];
    }

    std::array<std::uint32_t, 4> counter_;
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> block_{};
    int pos_;
    bool has_spare_;
    double spare_;
};

} // namespace rjar
