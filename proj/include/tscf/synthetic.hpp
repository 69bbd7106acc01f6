#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "tscf/dataset.hpp"

namespace tscf::synthetic {

/// Sizes default to zero meaning "use the generator's natural default".
struct Options {
  std::uint64_t seed = 1;
  std::size_t train = 0;
  std::size_t test = 0;
  std::size_t steps = 0;
  std::size_t channels = 0;
  double noise = -1.0;
};

/// Two-class hand-motion style series (T=150, 50 train / 150 test): a raised
/// plateau, with class 0 carrying a short dip before the rise.
Dataset gunpoint_like(const Options& opt = {});

/// Six-channel, four-class oscillation patterns (T=100, 40/40).
Dataset motions_like(const Options& opt = {});

/// Multichannel set where only channel 0 decides the class (offset sign).
Dataset decisive_channel(const Options& opt = {});

/// Mean-shifted Gaussian noise, two classes.
Dataset mean_shift(const Options& opt = {});

/// Class = sign(mean of first third) * sign(mean of last third) > 0.
Dataset xor_in_time(const Options& opt = {});

/// Class 0 carries a bump on steps [10, 20]; class 1 is flat noise.
Dataset planted_bump(const Options& opt = {});

/// Class 0 carries the motif [0, 1, 0] (scaled) on a gentle ramp; class 1 is
/// the bare ramp.
Dataset planted_motif(const Options& opt = {});

/// Dispatch by name: gunpoint, motions, decisive, meanshift, xor, bump, motif.
Dataset make(const std::string& kind, const Options& opt = {});

}  // namespace tscf::synthetic
