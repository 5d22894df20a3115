#include "nri/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nri/error.hpp"

namespace nri {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'N', 'R', 'I', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

void put_tensor(std::ofstream& f, const std::string& name, const Tensor& t) {
  put_u32(f, static_cast<std::uint32_t>(name.size()));
  f.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(f, static_cast<std::uint32_t>(t.rank()));
  for (const std::int64_t d : t.shape) put_u32(f, static_cast<std::uint32_t>(d));
  f.write(reinterpret_cast<const char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

struct Cursor {
  std::ifstream f;
  std::uint64_t offset = 0;

  explicit Cursor(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw FormatError("cannot open '" + path + "'", 0);
  }
  void read(void* dst, std::size_t count, const char* what) {
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (f.gcount() != static_cast<std::streamsize>(count)) {
      throw FormatError(std::string("truncated checkpoint while reading ") + what, offset);
    }
    offset += count;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }
};

ParamStore read_section(Cursor& in, std::uint32_t count) {
  ParamStore ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = in.u32("tensor name length");
    if (name_len > 4096) throw FormatError("implausible tensor name length", in.offset - 4);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len, "tensor name");
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank > 8) throw FormatError("implausible tensor rank", in.offset - 4);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = in.u32("tensor dims");
    Tensor t(shape);
    in.read(t.data.data(), t.data.size() * sizeof(float), "tensor data");
    ps.add(std::move(name), std::move(t));
  }
  return ps;
}

json model_to_json(const ModelConfig& m) {
  return {{"n_agents", m.n_agents},       {"feature_dim", m.feature_dim},
          {"window", m.window},           {"edge_types", m.edge_types},
          {"hidden", m.hidden},           {"temperature", m.temperature},
          {"recon_variance", m.recon_variance}, {"pred_steps", m.pred_steps}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.n_agents = j.at("n_agents").get<int>();
  m.feature_dim = j.at("feature_dim").get<int>();
  m.window = j.at("window").get<int>();
  m.edge_types = j.at("edge_types").get<int>();
  m.hidden = j.at("hidden").get<int>();
  m.temperature = j.at("temperature").get<double>();
  m.recon_variance = j.at("recon_variance").get<double>();
  m.pred_steps = j.at("pred_steps").get<int>();
  return m;
}

}  // namespace

void write_checkpoint(const Checkpoint& c, const std::string& path) {
  if (c.opt_m.size() != c.params.size() || c.opt_v.size() != c.params.size()) {
    throw ContractError("write_checkpoint: optimizer state does not match parameters");
  }
  json meta = {
      {"model", model_to_json(c.model)},
      {"seed", c.seed},
      {"epoch", c.epoch},
      {"opt_step", c.opt_step},
      {"val_accuracy", c.val_accuracy},
      {"n_params", c.params.size()},
  };
  const std::string blob = meta.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("write_checkpoint: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  put_u32(f, static_cast<std::uint32_t>(blob.size()));
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const auto& e : c.params.entries) put_tensor(f, e.name, e.value);
  for (const auto& e : c.opt_m.entries) put_tensor(f, "m." + e.name, e.value);
  for (const auto& e : c.opt_v.entries) put_tensor(f, "v." + e.name, e.value);
  if (!f) throw Error("write_checkpoint: short write to '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  Cursor in(path);
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, not a checkpoint file", 0);
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint32_t blob_len = in.u32("metadata length");
  std::string blob(blob_len, '\0');
  const std::uint64_t blob_at = in.offset;
  in.read(blob.data(), blob_len, "metadata");

  Checkpoint c;
  std::uint32_t n_params = 0;
  try {
    const json meta = json::parse(blob);
    c.model = model_from_json(meta.at("model"));
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.epoch = meta.at("epoch").get<int>();
    c.opt_step = meta.at("opt_step").get<long>();
    c.val_accuracy = meta.at("val_accuracy").get<double>();
    n_params = meta.at("n_params").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint metadata invalid: ") + e.what(), blob_at);
  }
  c.model.validate();

  c.params = read_section(in, n_params);
  ParamStore m = read_section(in, n_params);
  ParamStore v = read_section(in, n_params);
  // Strip the section prefixes so the stores stay parallel by name.
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if (m.entries[i].name != "m." + c.params.entries[i].name ||
        v.entries[i].name != "v." + c.params.entries[i].name) {
      throw FormatError("optimizer tensors out of order with parameters", in.offset);
    }
    m.entries[i].name = c.params.entries[i].name;
    v.entries[i].name = c.params.entries[i].name;
  }
  c.opt_m = std::move(m);
  c.opt_v = std::move(v);

  char extra;
  in.f.read(&extra, 1);
  if (in.f.gcount() != 0) throw FormatError("trailing bytes after tensors", in.offset);
  return c;
}

}  // namespace nri
