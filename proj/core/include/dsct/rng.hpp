#pragma once

#include <array>
#include <cstdint>

namespace dsct {

/// Philox4x32-10 block function: maps (counter, key) to 128 random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                         std::array<std::uint32_t, 2> key);

/// What a stream is used for; part of the stream address.
enum class StreamPurpose : std::uint32_t {
  init = 1,
  noise = 2,
  augment = 3,
  shuffle = 4,
  sigma = 5,
  eval_noise = 6,
  test = 7,
};

/// Coordinates addressing one stream, e.g. (epoch, video, frame).
struct StreamAddress {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint32_t c = 0;
};

/// Counter-based random stream. The values drawn are a pure function of
/// (seed, purpose, address, position), so independent streams can be
/// generated in any order and re-created at any point.
class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamPurpose purpose, StreamAddress address = {});

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller.
  double normal();

  std::uint64_t blocks_consumed() const { return block_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  StreamAddress address_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  unsigned used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0;
};

}  // namespace dsct
