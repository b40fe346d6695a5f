#include "mars/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mars/data.hpp"
#include "mars/digest.hpp"
#include "mars/error.hpp"

namespace mars {

using nlohmann::json;

namespace {

constexpr std::size_t kPrefixBytes = 8 + 1 + 4;
constexpr std::size_t kDigestBytes = 32;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

json header_json(const CheckpointHeader& h) {
  json layout = json::array();
  for (const auto& [name, shape] : h.layout) {
    layout.push_back({{"name", name}, {"rows", shape.first}, {"cols", shape.second}});
  }
  return {
      {"format", "mars-checkpoint"},
      {"version", h.version},
      {"config", h.config.to_json()},
      {"vocab_size", h.hyper.vocab_size},
      {"num_items", h.hyper.num_items},
      {"vocab_digest", h.meta.vocab_digest},
      {"stopword_id", h.meta.stopword_id},
      {"dataset_digest", h.meta.dataset_digest},
      {"rng_state", h.meta.rng_state},
      {"epoch", h.meta.epoch},
      {"val_map", h.meta.val_map},
      {"dtype", "float32le"},
      {"layout", layout},
      {"payload_bytes", h.payload_bytes},
      {"payload_sha256", h.payload_sha256},
  };
}

// Parses the prefix and header; returns the header and the payload offset.
std::pair<CheckpointHeader, std::size_t> parse_prefix(std::string_view bytes) {
  if (bytes.size() < kPrefixBytes) throw CorruptionError("checkpoint truncated: missing header prefix");
  if (bytes.substr(0, 8) != kCheckpointMagic) throw CorruptionError("not a checkpoint: bad magic");
  const auto version = static_cast<std::uint8_t>(bytes[8]);
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t header_len = get_u32(bytes, 9);
  if (bytes.size() < kPrefixBytes + header_len) throw CorruptionError("checkpoint truncated inside header");

  CheckpointHeader h;
  h.version = version;
  try {
    const json j = json::parse(bytes.substr(kPrefixBytes, header_len));
    h.config = TrainConfig::from_json(j.at("config"));
    h.hyper = h.config.hyper(j.at("vocab_size").get<std::size_t>(), j.at("num_items").get<std::size_t>());
    h.meta.vocab_digest = j.at("vocab_digest").get<std::string>();
    h.meta.stopword_id = j.at("stopword_id").get<std::string>();
    h.meta.dataset_digest = j.at("dataset_digest").get<std::string>();
    h.meta.rng_state = j.at("rng_state").get<std::string>();
    h.meta.epoch = j.at("epoch").get<std::size_t>();
    h.meta.val_map = j.at("val_map").get<double>();
    if (j.at("dtype").get<std::string>() != "float32le") throw CorruptionError("unsupported dtype");
    for (const auto& entry : j.at("layout")) {
      h.layout.emplace_back(entry.at("name").get<std::string>(),
                            std::pair{entry.at("rows").get<std::size_t>(), entry.at("cols").get<std::size_t>()});
    }
    h.payload_bytes = j.at("payload_bytes").get<std::size_t>();
    h.payload_sha256 = j.at("payload_sha256").get<std::string>();
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint header unreadable: ") + e.what());
  } catch (const UsageError& e) {
    throw CorruptionError(std::string("checkpoint config invalid: ") + e.what());
  }
  return {std::move(h), kPrefixBytes + header_len};
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params, const TrainConfig& config, const CheckpointMeta& meta) {
  params.validate();
  CheckpointHeader h;
  h.config = config;
  h.hyper = params.hyper;
  h.meta = meta;

  std::string payload;
  for (std::size_t id = 0; id < kParamCount; ++id) {
    const Tensor2& t = params.tensors[id];
    if (t.empty()) continue;
    h.layout.emplace_back(std::string(param_name(static_cast<ParamId>(id))), std::pair{t.rows(), t.cols()});
    for (double v : t.data()) put_u32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  const Sha256 digest = sha256(std::string_view(payload));
  h.payload_bytes = payload.size();
  h.payload_sha256 = to_hex(digest);

  const std::string header = header_json(h).dump();
  std::string out;
  out.reserve(kPrefixBytes + header.size() + payload.size() + kDigestBytes);
  out.append(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.append(header);
  out.append(payload);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  auto [header, offset] = parse_prefix(bytes);
  if (bytes.size() != offset + header.payload_bytes + kDigestBytes) {
    throw CorruptionError("checkpoint size mismatch: expected " +
                          std::to_string(offset + header.payload_bytes + kDigestBytes) + " bytes, found " +
                          std::to_string(bytes.size()));
  }
  const std::string_view payload = bytes.substr(offset, header.payload_bytes);
  const Sha256 digest = sha256(payload);
  if (std::memcmp(digest.data(), bytes.data() + offset + header.payload_bytes, kDigestBytes) != 0 ||
      to_hex(digest) != header.payload_sha256) {
    throw CorruptionError("checkpoint payload digest mismatch");
  }

  Checkpoint ckpt{header, ModelParams::zeros(header.hyper)};
  const auto shapes = expected_shapes(header.hyper);
  std::size_t pos = 0;
  std::size_t used = 0;
  for (const auto& [name, shape] : header.layout) {
    const auto id = param_from_name(name);
    if (!id) throw CorruptionError("unknown parameter '" + name + "' in checkpoint");
    const auto idx = static_cast<std::size_t>(*id);
    if (shapes[idx] != shape) throw CorruptionError("parameter '" + name + "' has an unexpected shape");
    const std::size_t count = shape.first * shape.second;
    if ((pos + count) * 4 > payload.size()) throw CorruptionError("checkpoint payload too short");
    Tensor2& t = ckpt.params.tensors[idx];
    for (std::size_t k = 0; k < count; ++k) {
      t.data()[k] = static_cast<double>(std::bit_cast<float>(get_u32(payload, (pos + k) * 4)));
    }
    pos += count;
    ++used;
  }
  if (pos * 4 != payload.size()) throw CorruptionError("checkpoint payload has trailing bytes");
  std::size_t expected = 0;
  for (const auto& s : shapes) expected += (s.first * s.second > 0) ? 1 : 0;
  if (used != expected) throw CorruptionError("checkpoint is missing parameters");
  try {
    ckpt.params.validate();
  } catch (const Error& e) {
    throw CorruptionError(std::string("checkpoint parameters invalid: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const ModelParams& params, const TrainConfig& config, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(params, config, meta));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string prefix(kPrefixBytes, '\0');
  in.read(prefix.data(), static_cast<std::streamsize>(prefix.size()));
  prefix.resize(static_cast<std::size_t>(in.gcount()));
  if (prefix.size() < kPrefixBytes) return parse_prefix(prefix).first;  // raises
  if (std::string_view(prefix).substr(0, 8) != kCheckpointMagic || static_cast<std::uint8_t>(prefix[8]) != kCheckpointVersion) {
    return parse_prefix(prefix).first;  // raises
  }
  std::string header(get_u32(prefix, 9), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  header.resize(static_cast<std::size_t>(in.gcount()));
  return parse_prefix(prefix + header).first;
}

std::string checkpoint_digest(const std::filesystem::path& path) {
  return to_hex(sha256(std::string_view(read_file(path))));
}

}  // namespace mars
