#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace judgebench {

/// splitmix64 finalizer; used to expand and derive seeds.
[[nodiscard]] std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Stable 64-bit FNV-1a over bytes. Identical on every platform.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Child seed for a named sub-stream of a master seed.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// xoshiro256** generator with fully specified derived distributions.
///
/// std:: distributions are implementation-defined, so shuffles and draws go
/// through this class to stay bit-identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next() noexcept;
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept;
    /// Standard normal draw (Box-Muller, cached pair).
    double normal() noexcept;

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace judgebench
