#include "nri/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nri/error.hpp"
#include "nri/parallel.hpp"
#include "nri/rng.hpp"
#include "nri/springs.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts are unsupported");

namespace nri {

using nlohmann::json;

void SystemConfig::validate() const {
  if (n_agents < 2) throw ContractError("SystemConfig: need at least two agents");
  if (frames < 2) throw ContractError("SystemConfig: need at least two frames");
  if (type_probs.size() != type_values.size() || type_probs.size() < 2) {
    throw ContractError("SystemConfig: type_probs/type_values must align with at least two types");
  }
  if (kind == Kind::Kuramoto && frequency_mode != "actual" && frequency_mode != "estimated") {
    throw ContractError("SystemConfig: frequency_mode must be 'actual' or 'estimated', got '" +
                        frequency_mode + "'");
  }
  if (kind == Kind::Kuramoto && boundary.kind != Boundary::Kind::Unbounded) {
    throw ContractError("SystemConfig: oscillators have no spatial boundary");
  }
}

Tensor TrajectoryDataset::sim_features(int sim) const {
  const int n = meta.system.n_agents;
  const long t = meta.system.frames;
  const int d = meta.system.feature_dim();
  Tensor out({n, t, d});
  const std::size_t count = out.data.size();
  std::memcpy(out.data.data(), features.data.data() + static_cast<std::size_t>(sim) * count,
              count * sizeof(float));
  return out;
}

Tensor build_features(const KuramotoSeries& raw, const std::vector<double>& omega,
                      const std::string& frequency_mode) {
  const int n = raw.n;
  const long t = raw.frames;
  if (static_cast<int>(omega.size()) != n) throw ContractError("build_features: omega size mismatch");

  std::vector<double> freq(omega);
  if (frequency_mode == "estimated") {
    // Per-oscillator mean phase velocity over the kept frames; the series is
    // stored [frame][agent], so stride out one agent's column.
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (long f = 0; f < t; ++f) s += raw.rate[static_cast<std::size_t>(f * n + i)];
      freq[static_cast<std::size_t>(i)] = s / static_cast<double>(t);
    }
  } else if (frequency_mode != "actual") {
    throw ContractError("build_features: frequency_mode must be 'actual' or 'estimated', got '" +
                        frequency_mode + "'");
  }

  Tensor out({n, t, 3});
  for (int i = 0; i < n; ++i) {
    for (long f = 0; f < t; ++f) {
      float* row = out.data.data() + (static_cast<long>(i) * t + f) * 3;
      row[0] = static_cast<float>(raw.rate[static_cast<std::size_t>(f * n + i)]);
      row[1] = static_cast<float>(std::sin(raw.phase[static_cast<std::size_t>(f * n + i)]));
      row[2] = static_cast<float>(freq[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

TrajectoryDataset generate_dataset(const SystemConfig& config, int sims, std::uint64_t seed) {
  config.validate();
  if (sims < 1) throw ContractError("generate_dataset: need at least one simulation");

  TrajectoryDataset d;
  d.meta.system = config;
  d.meta.sims = sims;
  d.meta.seed = seed;
  d.graphs.resize(static_cast<std::size_t>(sims));
  const int n = config.n_agents;
  const long t = config.frames;
  const int dim = config.feature_dim();
  d.features = Tensor({sims, n, t, dim});
  const std::size_t per_sim = static_cast<std::size_t>(n) * static_cast<std::size_t>(t) *
                              static_cast<std::size_t>(dim);

  parallel_for(sims, [&](std::int64_t s0, std::int64_t s1) {
    for (std::int64_t s = s0; s < s1; ++s) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
      InteractionGraph g = sample_er_graph(n, config.type_probs, config.type_values, rng);
      Tensor feats;
      if (config.kind == SystemConfig::Kind::Springs) {
        SpringState init = init_springs(n, rng, config.boundary);
        feats = simulate_springs(g, std::move(init), config.boundary,
                                 t * config.downsample(), config.dt(), config.downsample());
      } else {
        std::vector<double> phase0(static_cast<std::size_t>(n)), omega(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          omega[static_cast<std::size_t>(i)] = rng.uniform(1.0, 10.0);
          phase0[static_cast<std::size_t>(i)] = rng.uniform(0.0, 2.0 * M_PI);
        }
        KuramotoSeries raw = simulate_kuramoto(g, phase0, omega, t, config.dt(), config.downsample());
        feats = build_features(raw, omega, config.frequency_mode);
      }
      std::memcpy(d.features.data.data() + static_cast<std::size_t>(s) * per_sim,
                  feats.data.data(), per_sim * sizeof(float));
      d.graphs[static_cast<std::size_t>(s)] = std::move(g);
    }
  });
  return d;
}

// --- binary IO ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

json boundary_to_json(const Boundary& b) {
  switch (b.kind) {
    case Boundary::Kind::Square: return {{"kind", "square"}, {"extent", b.extent}};
    case Boundary::Kind::Circle: return {{"kind", "circle"}, {"extent", b.extent}};
    default: return {{"kind", "unbounded"}};
  }
}

Boundary boundary_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "unbounded") return Boundary::unbounded();
  if (kind == "square") return Boundary::square(j.at("extent").get<double>());
  if (kind == "circle") return Boundary::circle(j.at("extent").get<double>());
  throw FormatError("unknown boundary kind '" + kind + "'", 0);
}

// Reader that tracks its offset so format errors can point at the byte that
// disappointed us.
struct Cursor {
  std::ifstream f;
  std::uint64_t offset = 0;

  explicit Cursor(const std::string& path) : f(path, std::ios::binary) {
    if (!f) throw FormatError("cannot open '" + path + "'", 0);
  }
  void read(void* dst, std::size_t count, const char* what) {
    f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (f.gcount() != static_cast<std::streamsize>(count)) {
      throw FormatError(std::string("truncated file while reading ") + what, offset);
    }
    offset += count;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }
};

}  // namespace

void write_dataset(const TrajectoryDataset& d, const std::string& path) {
  const SystemConfig& sc = d.meta.system;
  json meta = {
      {"system", sc.kind_str()},
      {"n_agents", sc.n_agents},
      {"frames", sc.frames},
      {"feature_dim", sc.feature_dim()},
      {"dt", sc.dt()},
      {"downsample", sc.downsample()},
      {"boundary", boundary_to_json(sc.boundary)},
      {"seed", d.meta.seed},
      {"frequency_mode", sc.frequency_mode},
      {"type_probs", sc.type_probs},
      {"type_values", sc.type_values},
      {"sims", d.meta.sims},
  };
  const std::string blob = meta.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("write_dataset: cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  put_u32(f, static_cast<std::uint32_t>(blob.size()));
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const InteractionGraph& g : d.graphs) {
    f.write(reinterpret_cast<const char*>(g.link_type.data()),
            static_cast<std::streamsize>(g.link_type.size()));
  }
  f.write(reinterpret_cast<const char*>(d.features.data.data()),
          static_cast<std::streamsize>(d.features.data.size() * sizeof(float)));
  if (!f) throw Error("write_dataset: short write to '" + path + "'");
}

TrajectoryDataset read_dataset(const std::string& path) {
  Cursor in(path);
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, not a dataset file", 0);
  const std::uint32_t version = in.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  }
  const std::uint32_t blob_len = in.u32("metadata length");
  std::string blob(blob_len, '\0');
  const std::uint64_t blob_at = in.offset;
  in.read(blob.data(), blob_len, "metadata");

  json meta;
  try {
    meta = json::parse(blob);
  } catch (const json::exception& e) {
    throw FormatError(std::string("metadata is not valid JSON: ") + e.what(), blob_at);
  }

  TrajectoryDataset d;
  try {
    SystemConfig& sc = d.meta.system;
    const std::string system = meta.at("system").get<std::string>();
    if (system == "springs") {
      sc.kind = SystemConfig::Kind::Springs;
    } else if (system == "kuramoto") {
      sc.kind = SystemConfig::Kind::Kuramoto;
    } else {
      throw FormatError("unknown system kind '" + system + "'", blob_at);
    }
    sc.n_agents = meta.at("n_agents").get<int>();
    sc.frames = meta.at("frames").get<long>();
    sc.boundary = boundary_from_json(meta.at("boundary"));
    sc.frequency_mode = meta.at("frequency_mode").get<std::string>();
    sc.type_probs = meta.at("type_probs").get<std::vector<double>>();
    sc.type_values = meta.at("type_values").get<std::vector<double>>();
    d.meta.seed = meta.at("seed").get<std::uint64_t>();
    d.meta.sims = meta.at("sims").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("metadata missing required field: ") + e.what(), blob_at);
  }
  d.meta.system.validate();

  const int sims = d.meta.sims;
  const int n = d.meta.system.n_agents;
  const long t = d.meta.system.frames;
  const int dim = d.meta.system.feature_dim();
  if (sims < 1) throw FormatError("metadata sims must be positive", blob_at);

  d.graphs.reserve(static_cast<std::size_t>(sims));
  for (int s = 0; s < sims; ++s) {
    InteractionGraph g(n, d.meta.system.type_values);
    in.read(g.link_type.data(), g.link_type.size(), "link-type matrices");
    d.graphs.push_back(std::move(g));
  }
  d.features = Tensor({sims, n, t, dim});
  in.read(d.features.data.data(), d.features.data.size() * sizeof(float), "features");

  char extra;
  in.f.read(&extra, 1);
  if (in.f.gcount() != 0) throw FormatError("trailing bytes after features", in.offset);
  return d;
}

void export_trajectories_csv(const TrajectoryDataset& d, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("export_trajectories_csv: cannot open '" + path + "'");
  const int dim = d.meta.system.feature_dim();
  f << "sim,agent,frame";
  for (int k = 0; k < dim; ++k) f << ",f" << k;
  f << "\n";
  const int n = d.meta.system.n_agents;
  const long t = d.meta.system.frames;
  for (int s = 0; s < d.sims(); ++s) {
    for (int i = 0; i < n; ++i) {
      for (long fr = 0; fr < t; ++fr) {
        f << s << ',' << i << ',' << fr;
        const float* row = d.features.data.data() +
                           (((static_cast<long>(s) * n + i) * t) + fr) * dim;
        for (int k = 0; k < dim; ++k) f << ',' << row[k];
        f << "\n";
      }
    }
  }
}

}  // namespace nri
