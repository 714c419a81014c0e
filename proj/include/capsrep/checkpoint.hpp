#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "capsrep/errors.hpp"
#include "capsrep/tensor.hpp"

namespace capsrep::train {

// A full training snapshot: every parameter and optimizer moment as a named
// f32 block, plus the resolved run configuration and loop position. Restoring
// one reproduces the next optimizer step bit for bit.
struct CheckpointState {
  std::string config_json;  // canonical JSON of the resolved TrainConfig
  std::int64_t epoch = 0;   // completed epochs
  std::int64_t step = 0;    // completed optimizer steps
  std::int64_t adam_t = 0;  // optimizer step counter
  std::string rng_state;    // pairing stream for the next epoch
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, nd::Tensor>> blocks;

  const nd::Tensor& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

// Container layout: magic "CKP1", little-endian u32 manifest length, UTF-8
// JSON manifest (config, epoch, step, adam_t, rng_state, config_hash,
// n_blocks), then per block: u32 name length, name bytes, u32 ndim,
// u64 dims, raw little-endian f32 values.
std::vector<std::uint8_t> serialize_checkpoint(const CheckpointState& state);
CheckpointState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const CheckpointState& state, const std::string& path);
CheckpointState load_checkpoint(const std::string& path);

}  // namespace capsrep::train
