#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mars/config.hpp"
#include "mars/model.hpp"

namespace mars {

// Binary layout:
//   "MARSCKPT" | u8 version | u32 LE header length | UTF-8 JSON header |
//   parameter blobs (IEEE-754 LE float32, header order) | SHA-256(payload)
inline constexpr std::string_view kCheckpointMagic = "MARSCKPT";
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string vocab_digest;
  std::string stopword_id;
  std::string dataset_digest;
  std::string rng_state;
  std::size_t epoch = 0;
  double val_map = 0.0;
};

struct CheckpointHeader {
  std::uint8_t version = kCheckpointVersion;
  TrainConfig config;
  ModelHyper hyper;
  CheckpointMeta meta;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> layout;  // name, (rows, cols)
  std::string payload_sha256;
  std::size_t payload_bytes = 0;
};

struct Checkpoint {
  CheckpointHeader header;
  ModelParams params;
};

std::string serialize_checkpoint(const ModelParams& params, const TrainConfig& config, const CheckpointMeta& meta);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelParams& params, const TrainConfig& config, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Reads only the fixed prefix and the JSON header.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// SHA-256 of the whole file.
std::string checkpoint_digest(const std::filesystem::path& path);

}  // namespace mars
