#pragma once

#include <array>
#include <cstdint>

namespace wcontract {

using Philox4x32Ctr = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

//! Philox4x32 with 10 rounds (Salmon et al., SC'11).
Philox4x32Ctr philox4x32_10(Philox4x32Ctr ctr, Philox4x32Key key);

//! Counter-based stream keyed by the master seed; the counter words hold
//! (block, substream, index lo, index hi). Draws depend only on
//! (seed, index, substream) and the number of draws already taken.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index, std::uint32_t substream = 0);

  //! Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  //! Standard normal by Box-Muller; normals come in cached pairs.
  double normal();
  void normals(double* out, int k) {
    for (int i = 0; i < k; ++i) out[i] = normal();
  }
  //! Number of 128-bit blocks consumed.
  std::uint32_t blocks() const { return block_; }

 private:
  void refill();

  Philox4x32Key key_;
  std::uint32_t substream_;
  std::uint32_t index_lo_, index_hi_;
  std::uint32_t block_ = 0;
  Philox4x32Ctr buf_{};
  int used_ = 4;
  double spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace wcontract
