#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfn/adam.hpp"
#include "gfn/model.hpp"

namespace gfn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named float tensors plus a free-form metadata string.
///
/// Binary layout, all integers little-endian:
///   "GFNCKPT\0"            8-byte magic
///   u32 version            currently 1
///   u32 meta_len, bytes    metadata (JSON text)
///   u32 count
///   u64 payload_checksum   FNV-1a over the payload bytes
///   count x { u32 name_len, name bytes, 4 x i64 shape (n,c,h,w), u64 offset }
///   payload                f32 little-endian, entry data at byte `offset`
struct TensorArchive {
  struct Entry {
    std::string name;
    Tensor<float> value;
  };
  std::string meta;
  std::vector<Entry> entries;

  std::vector<std::uint8_t> serialize() const;
  static TensorArchive deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string model_config_json(const ModelConfig& cfg);
ModelConfig parse_model_config(const std::string& json);

/// Parameters with the model configuration stored as metadata.
TensorArchive params_to_archive(const ParamSet<float>& params, const ModelConfig& cfg);

/// Builds the architecture from the archive's config and fills it, checking
/// that every name and shape matches exactly.
ParamSet<float> params_from_archive(const TensorArchive& archive, ModelConfig* cfg_out = nullptr);

void save_model(const std::filesystem::path& path, const ParamSet<float>& params, const ModelConfig& cfg);
ParamSet<float> load_model(const std::filesystem::path& path, ModelConfig* cfg_out = nullptr);

TensorArchive adam_to_archive(const AdamState<float>& state);
AdamState<float> adam_from_archive(const TensorArchive& archive);

}  // namespace gfn
