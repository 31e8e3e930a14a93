#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reswm/tensor.hpp"

namespace reswm {

// Binary checkpoint layout:
//   8-byte magic "RESWMCK1", version u32,
//   config text: length u32 + bytes,
//   parameter section: count u32, then per array
//     name length u32, name bytes, dtype tag u8 (0=f64, 1=f32),
//     rank u32, extents u64[rank], raw little-endian row-major values,
//   optimizer section in the same scheme,
//   RNG state (seed u64, counter u64), env-step counter u64.
struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<double> values;
};

struct CheckpointData {
  std::string config_text;
  std::vector<NamedArray> params;
  std::vector<NamedArray> optimizer;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_counter = 0;
  std::uint64_t env_steps = 0;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace reswm
