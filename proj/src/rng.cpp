#include "abspread/rng.hpp"

#include <cmath>

namespace abspread {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint32_t stream_id, Domain domain,
                       std::uint32_t entity)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      entity_(entity),
      stream_(stream_id),
      domain_(static_cast<std::uint32_t>(domain)) {}

CounterRng::result_type CounterRng::operator()() {
  if (used_ == 2) {
    // Counter layout: block index (56 bits) | domain (8 bits) | entity | stream.
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_), entity_, stream_,
        (domain_ << 24) | static_cast<std::uint32_t>((block_ >> 32) & 0xFFFFFFu)};
    buf_ = philox4x32(ctr, key_);
    ++block_;
    used_ = 0;
  }
  const auto i = static_cast<std::size_t>(2 * used_);
  ++used_;
  return (static_cast<std::uint64_t>(buf_[i]) << 32) | buf_[i + 1];
}

double CounterRng::uniform_pos() {
  // (k + 1) / 2^53 for k uniform in [0, 2^53)
  return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // Lemire's multiply-shift with rejection.
  std::uint64_t x = (*this)();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = (*this)();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double CounterRng::exp1() { return -std::log(uniform_pos()); }

}  // namespace abspread
