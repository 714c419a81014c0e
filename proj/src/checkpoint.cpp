#include "capsrep/checkpoint.hpp"

#include <json.hpp>

#include "capsrep/util.hpp"

namespace capsrep::train {

const nd::Tensor& CheckpointState::block(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no block named '" + name + "'");
}

bool CheckpointState::has_block(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return true;
  }
  return false;
}

std::vector<std::uint8_t> serialize_checkpoint(const CheckpointState& state) {
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(state.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint config is not valid JSON: ") +
                      e.what());
  }
  const nlohmann::json manifest{{"config", config},
                                {"epoch", state.epoch},
                                {"step", state.step},
                                {"adam_t", state.adam_t},
                                {"rng_state", state.rng_state},
                                {"config_hash", state.config_hash},
                                {"n_blocks", state.blocks.size()}};
  const std::string manifest_str = manifest.dump();

  std::vector<std::uint8_t> out;
  util::append_bytes(out, "CKP1", 4);
  util::append_u32(out, static_cast<std::uint32_t>(manifest_str.size()));
  util::append_bytes(out, manifest_str.data(), manifest_str.size());
  for (const auto& [name, tensor] : state.blocks) {
    util::append_u32(out, static_cast<std::uint32_t>(name.size()));
    util::append_bytes(out, name.data(), name.size());
    util::append_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
    for (const std::int64_t dim : tensor.shape()) {
      util::append_u64(out, static_cast<std::uint64_t>(dim));
    }
    const float* d = tensor.data();
    for (std::int64_t i = 0; i < tensor.numel(); ++i) {
      util::append_f32(out, d[i]);
    }
  }
  return out;
}

CheckpointState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  util::ByteReader reader(bytes);
  char magic[4];
  reader.bytes(magic, 4);
  if (std::string_view(magic, 4) != "CKP1") {
    throw IoError("bad checkpoint magic");
  }
  const std::uint32_t manifest_len = reader.u32();
  std::string manifest_str(manifest_len, '\0');
  reader.bytes(manifest_str.data(), manifest_len);

  CheckpointState state;
  std::size_t n_blocks = 0;
  try {
    const nlohmann::json j = nlohmann::json::parse(manifest_str);
    state.config_json = j.at("config").dump();
    state.epoch = j.at("epoch").get<std::int64_t>();
    state.step = j.at("step").get<std::int64_t>();
    state.adam_t = j.at("adam_t").get<std::int64_t>();
    state.rng_state = j.at("rng_state").get<std::string>();
    state.config_hash = j.at("config_hash").get<std::uint64_t>();
    n_blocks = j.at("n_blocks").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid checkpoint manifest: ") + e.what());
  }

  state.blocks.reserve(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::uint32_t name_len = reader.u32();
    std::string name(name_len, '\0');
    reader.bytes(name.data(), name_len);
    const std::uint32_t ndim = reader.u32();
    if (ndim == 0 || ndim > 8) {
      throw IoError("checkpoint block '" + name + "' has bad rank " +
                    std::to_string(ndim));
    }
    nd::Shape shape;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      shape.push_back(static_cast<std::int64_t>(reader.u64()));
    }
    nd::Tensor tensor(shape);
    float* d = tensor.mutable_data();
    for (std::int64_t i = 0; i < tensor.numel(); ++i) {
      d[i] = reader.f32();
    }
    state.blocks.emplace_back(std::move(name), std::move(tensor));
  }
  if (!reader.done()) {
    throw IoError("checkpoint has " + std::to_string(reader.remaining()) +
                  " trailing bytes");
  }
  return state;
}

void save_checkpoint(const CheckpointState& state, const std::string& path) {
  util::write_file(path, serialize_checkpoint(state));
}

CheckpointState load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(util::read_file(path));
}

}  // namespace capsrep::train
