#include "gfn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace gfn {
namespace {

constexpr char kMagic[8] = {'G', 'F', 'N', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, sizeof v);
    u32(v);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view activation_name(GateActivation a) { return a == GateActivation::sigmoid ? "sigmoid" : "linear"; }

}  // namespace

std::vector<std::uint8_t> TensorArchive::serialize() const {
  Writer payload;
  std::vector<std::uint64_t> offsets;
  for (const Entry& e : entries) {
    offsets.push_back(payload.out.size());
    for (float v : e.value.data()) payload.f32(v);
  }
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.u32(static_cast<std::uint32_t>(entries.size()));
  w.u64(fnv1a(payload.out.data(), payload.out.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    const Shape& s = e.value.shape();
    for (std::int64_t d : {s.n, s.c, s.h, s.w}) w.u64(static_cast<std::uint64_t>(d));
    w.u64(offsets[i]);
  }
  w.out.insert(w.out.end(), payload.out.begin(), payload.out.end());
  return std::move(w.out);
}

TensorArchive TensorArchive::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw CheckpointError("bad checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  TensorArchive ar;
  ar.meta = r.str(r.u32());
  const std::uint32_t count = r.u32();
  const std::uint64_t checksum = r.u64();
  struct Row {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Row> rows;
  for (std::uint32_t i = 0; i < count; ++i) {
    Row row;
    row.name = r.str(r.u32());
    std::int64_t d[4];
    for (auto& x : d) {
      x = static_cast<std::int64_t>(r.u64());
      if (x < 0 || x > (std::int64_t{1} << 32)) throw CheckpointError("implausible extent in entry " + row.name);
    }
    row.shape = {d[0], d[1], d[2], d[3]};
    row.offset = r.u64();
    rows.push_back(std::move(row));
  }
  const std::size_t base = r.pos;
  const std::size_t payload = bytes.size() - base;
  if (fnv1a(bytes.data() + base, payload) != checksum) throw CheckpointError("checkpoint payload checksum mismatch");
  for (const Row& row : rows) {
    const auto n = static_cast<std::uint64_t>(row.shape.numel());
    if (row.offset > payload || n * 4 > payload - row.offset) {
      throw CheckpointError("entry " + row.name + " extends past end of payload");
    }
    std::vector<float> data(n);
    const std::uint8_t* p = bytes.data() + base + row.offset;
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint32_t v = static_cast<std::uint32_t>(p[4 * i]) | static_cast<std::uint32_t>(p[4 * i + 1]) << 8 |
                              static_cast<std::uint32_t>(p[4 * i + 2]) << 16 |
                              static_cast<std::uint32_t>(p[4 * i + 3]) << 24;
      std::memcpy(&data[i], &v, sizeof v);
    }
    ar.entries.push_back({row.name, Tensor<float>(row.shape, std::move(data))});
  }
  return ar;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::string model_config_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["width"] = cfg.width;
  j["variant"] = std::string(variant_name(cfg.variant));
  j["gate_activation"] = std::string(activation_name(cfg.gate_activation));
  j["res_scale"] = cfg.res_scale;
  return j.dump();
}

ModelConfig parse_model_config(const std::string& json) {
  ModelConfig cfg;
  try {
    const auto j = nlohmann::json::parse(json);
    cfg.width = j.at("width").get<int>();
    cfg.variant = parse_variant(j.at("variant").get<std::string>());
    const auto act = j.at("gate_activation").get<std::string>();
    if (act == "sigmoid") {
      cfg.gate_activation = GateActivation::sigmoid;
    } else if (act == "linear") {
      cfg.gate_activation = GateActivation::linear;
    } else {
      throw CheckpointError("unknown gate activation " + act);
    }
    cfg.res_scale = j.at("res_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad model config in checkpoint: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TensorArchive params_to_archive(const ParamSet<float>& params, const ModelConfig& cfg) {
  TensorArchive ar;
  ar.meta = model_config_json(cfg);
  for (const auto& name : params.names()) ar.entries.push_back({name, params.at(name)});
  return ar;
}

ParamSet<float> params_from_archive(const TensorArchive& archive, ModelConfig* cfg_out) {
  const ModelConfig cfg = parse_model_config(archive.meta);
  ParamSet<float> params;
  const auto specs = param_specs(cfg);
  if (specs.size() != archive.entries.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(archive.entries.size()) + " tensors, architecture expects " +
                          std::to_string(specs.size()));
  }
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& e : archive.entries) by_name[e.name] = &e.value;
  for (const ParamSpec& spec : specs) {
    auto it = by_name.find(spec.name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing parameter " + spec.name);
    if (!(it->second->shape() == spec.shape)) {
      throw CheckpointError("parameter " + spec.name + " has shape " + it->second->shape().str() + ", expected " +
                            spec.shape.str());
    }
    params.add(spec.name, spec.group, *it->second);
  }
  if (cfg_out != nullptr) *cfg_out = cfg;
  return params;
}

void save_model(const std::filesystem::path& path, const ParamSet<float>& params, const ModelConfig& cfg) {
  params_to_archive(params, cfg).save(path);
}

ParamSet<float> load_model(const std::filesystem::path& path, ModelConfig* cfg_out) {
  return params_from_archive(TensorArchive::load(path), cfg_out);
}

TensorArchive adam_to_archive(const AdamState<float>& state) {
  TensorArchive ar;
  nlohmann::ordered_json j;
  j["step"] = state.step;
  j["beta1"] = state.hyper.beta1;
  j["beta2"] = state.hyper.beta2;
  j["eps"] = state.hyper.eps;
  ar.meta = j.dump();
  for (const auto& [name, m] : state.first_moment) ar.entries.push_back({"m/" + name, m});
  for (const auto& [name, v] : state.second_moment) ar.entries.push_back({"v/" + name, v});
  return ar;
}

AdamState<float> adam_from_archive(const TensorArchive& archive) {
  AdamState<float> state;
  try {
    const auto j = nlohmann::json::parse(archive.meta);
    state.step = j.at("step").get<std::int64_t>();
    state.hyper.beta1 = j.at("beta1").get<double>();
    state.hyper.beta2 = j.at("beta2").get<double>();
    state.hyper.eps = j.at("eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad optimizer metadata: ") + e.what());
  }
  for (const auto& e : archive.entries) {
    if (e.name.rfind("m/", 0) == 0) {
      state.first_moment.emplace(e.name.substr(2), e.value);
    } else if (e.name.rfind("v/", 0) == 0) {
      state.second_moment.emplace(e.name.substr(2), e.value);
    } else {
      throw CheckpointError("unexpected optimizer entry " + e.name);
    }
  }
  return state;
}

}  // namespace gfn
