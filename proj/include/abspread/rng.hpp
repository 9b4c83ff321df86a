#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace abspread {

/// Philox4x32-10 block function (Salmon et al., Random123). Counter-based:
/// every (key, counter) pair maps to an independent 128-bit block, so streams
/// keyed by distinct counters can never overlap.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

/// What a substream is used for. Occupies the top byte of the counter.
enum class Domain : std::uint32_t {
  field = 1,  // initial Poisson field
  walk = 2,   // per-particle jump clocks and directions
  path = 3,   // test/analysis walk paths
  aux = 4,    // bootstrap, perturbation choices, misc
};

/// One 64-bit generator over a fixed (seed, stream, domain, entity) key.
/// Satisfies UniformRandomBitGenerator. Each block call yields two outputs.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::uint32_t stream_id, Domain domain, std::uint32_t entity);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on (0, 1], 53-bit resolution.
  double uniform_pos();
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);
  /// Standard exponential variate.
  double exp1();

  std::uint64_t blocks_used() const { return block_; }

 private:
  std::array<std::uint32_t, 2> key_{};
  std::uint32_t entity_ = 0;
  std::uint32_t stream_ = 0;
  std::uint32_t domain_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 2;  // outputs consumed from buf_ (2 per block)
};

/// Replica-level randomness handle: (seed, stream_id). All randomness of a
/// replica is derived from it through substreams.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint32_t stream_id = 0;

  CounterRng substream(Domain domain, std::uint32_t entity = 0) const {
    return CounterRng(seed, stream_id, domain, entity);
  }
};

}  // namespace abspread
