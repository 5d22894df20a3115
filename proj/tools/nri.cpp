// Command-line front end: simulate / train / eval / report. Each command
// resolves its configuration from the task catalog, then an optional JSON
// config file, then explicit flags (later wins), and echoes the resolved
// config into a manifest next to its outputs.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nri/error.hpp"
#include "nri/parallel.hpp"
#include "nri/tasks.hpp"

#ifndef NRI_VERSION_STRING
#define NRI_VERSION_STRING "0.1.0-unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config schema (all sections optional; unknown keys rejected):
//   system: kind, n_agents, type_probs, type_values, frames, boundary
//           {kind, extent}, frequency_mode
//   model:  window, edge_types, hidden, temperature, recon_variance,
//           pred_steps
//   train:  epochs, batch_size, learning_rate, lr_decay, lr_decay_every,
//           checkpoint_every, grad_clip, val_fraction
//   sims:   train, test
//   horizons: [T, ...]
// ---------------------------------------------------------------------------

json boundary_to_json(const nri::Boundary& b) {
  switch (b.kind) {
    case nri::Boundary::Kind::Square: return {{"kind", "square"}, {"extent", b.extent}};
    case nri::Boundary::Kind::Circle: return {{"kind", "circle"}, {"extent", b.extent}};
    case nri::Boundary::Kind::Unbounded: break;
  }
  return {{"kind", "unbounded"}};
}

nri::Boundary boundary_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "unbounded") return nri::Boundary::unbounded();
  if (kind == "square") return nri::Boundary::square(j.at("extent").get<double>());
  if (kind == "circle") return nri::Boundary::circle(j.at("extent").get<double>());
  throw nri::ContractError("config: unknown boundary kind '" + kind + "'");
}

json system_to_json(const nri::SystemConfig& s) {
  return {{"kind", s.kind_str()},
          {"n_agents", s.n_agents},
          {"type_probs", s.type_probs},
          {"type_values", s.type_values},
          {"frames", s.frames},
          {"boundary", boundary_to_json(s.boundary)},
          {"frequency_mode", s.frequency_mode}};
}

json model_to_json(const nri::ModelConfig& m) {
  return {{"n_agents", m.n_agents},       {"feature_dim", m.feature_dim},
          {"window", m.window},           {"edge_types", m.edge_types},
          {"hidden", m.hidden},           {"temperature", m.temperature},
          {"recon_variance", m.recon_variance}, {"pred_steps", m.pred_steps}};
}

json train_to_json(const nri::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"lr_decay", t.lr_decay},
          {"lr_decay_every", t.lr_decay_every},
          {"checkpoint_every", t.checkpoint_every},
          {"grad_clip", t.grad_clip},
          {"val_fraction", t.val_fraction}};
}

template <class T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw nri::ContractError("config: unknown key '" + key + "' in " + where);
  }
}

// Everything a command needs, after task defaults, config file, and flags
// have been folded together.
struct Run {
  nri::TaskSpec spec;      // id 0 = custom (no catalog entry)
  nri::TrainConfig train;  // seed filled from the master seed per task
  std::vector<int> horizons = {10, 20};
  std::uint64_t seed = 0;
  std::string out_root = "runs";
  bool force = false;
};

void apply_config_file(Run& run, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw nri::ContractError("config file '" + path + "' does not exist");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw nri::FormatError("config '" + path + "' is not valid JSON: " + e.what(), 0);
  }
  reject_unknown(j, {"system", "model", "train", "sims", "horizons"}, "top level");
  if (j.contains("system")) {
    const json& s = j["system"];
    reject_unknown(s,
                   {"kind", "n_agents", "type_probs", "type_values", "frames", "boundary",
                    "frequency_mode"},
                   "system");
    nri::SystemConfig& sc = run.spec.system;
    if (s.contains("kind")) {
      const std::string kind = s["kind"].get<std::string>();
      if (kind == "springs") {
        sc.kind = nri::SystemConfig::Kind::Springs;
      } else if (kind == "kuramoto") {
        sc.kind = nri::SystemConfig::Kind::Kuramoto;
      } else {
        throw nri::ContractError("config: unknown system kind '" + kind + "'");
      }
    }
    take(s, "n_agents", sc.n_agents);
    take(s, "type_probs", sc.type_probs);
    take(s, "type_values", sc.type_values);
    take(s, "frames", sc.frames);
    if (s.contains("boundary")) sc.boundary = boundary_from_json(s["boundary"]);
    take(s, "frequency_mode", sc.frequency_mode);
    // The model always observes what the system emits.
    run.spec.model.n_agents = sc.n_agents;
    run.spec.model.feature_dim = sc.feature_dim();
    run.spec.model.edge_types = sc.edge_types();
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(
        m, {"window", "edge_types", "hidden", "temperature", "recon_variance", "pred_steps"},
        "model");
    nri::ModelConfig& mc = run.spec.model;
    take(m, "window", mc.window);
    take(m, "edge_types", mc.edge_types);
    take(m, "hidden", mc.hidden);
    take(m, "temperature", mc.temperature);
    take(m, "recon_variance", mc.recon_variance);
    take(m, "pred_steps", mc.pred_steps);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t,
                   {"epochs", "batch_size", "learning_rate", "lr_decay", "lr_decay_every",
                    "checkpoint_every", "grad_clip", "val_fraction"},
                   "train");
    take(t, "epochs", run.train.epochs);
    take(t, "batch_size", run.train.batch_size);
    take(t, "learning_rate", run.train.learning_rate);
    take(t, "lr_decay", run.train.lr_decay);
    take(t, "lr_decay_every", run.train.lr_decay_every);
    take(t, "checkpoint_every", run.train.checkpoint_every);
    take(t, "grad_clip", run.train.grad_clip);
    take(t, "val_fraction", run.train.val_fraction);
    run.spec.epochs = run.train.epochs;
  }
  if (j.contains("sims")) {
    reject_unknown(j["sims"], {"train", "test"}, "sims");
    take(j["sims"], "train", run.spec.train_sims);
    take(j["sims"], "test", run.spec.test_sims);
  }
  take(j, "horizons", run.horizons);
}

Run resolve_run(int task, const std::string& config_path, std::uint64_t seed,
                const std::string& out, bool force, const std::vector<int>& horizon_flag) {
  Run run;
  if (task > 0) {
    run.spec = nri::task_spec(task);
  } else {
    run.spec.id = 0;
    run.spec.name = "custom";
    run.spec.model.feature_dim = run.spec.system.feature_dim();
  }
  run.train.epochs = run.spec.epochs;
  if (!config_path.empty()) apply_config_file(run, config_path);
  if (!horizon_flag.empty()) run.horizons = horizon_flag;
  run.spec.epochs = run.train.epochs;
  run.seed = seed;
  run.out_root = out;
  run.force = force;
  run.spec.system.validate();
  run.spec.model.validate();
  return run;
}

std::string timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const Run& run, const std::string& command, const std::string& dir) {
  json j = {{"command", command},
            {"version", NRI_VERSION_STRING},
            {"timestamp", timestamp_utc()},
            {"seed", run.seed},
            {"task", run.spec.id},
            {"name", run.spec.name},
            {"config",
             {{"system", system_to_json(run.spec.system)},
              {"model", model_to_json(run.spec.model)},
              {"train", train_to_json(run.train)},
              {"sims", {{"train", run.spec.train_sims}, {"test", run.spec.test_sims}}},
              {"horizons", run.horizons}}}};
  std::ofstream f(dir + "/manifest-" + command + ".json", std::ios::trunc);
  if (!f) throw nri::Error("cannot write manifest in '" + dir + "'");
  f << j.dump(2) << "\n";
}

void refuse_existing(const std::string& path, bool force) {
  if (!fs::exists(path)) return;
  if (!force) {
    throw nri::ContractError("output '" + path + "' already exists; pass --force to overwrite");
  }
  fs::remove(path);
}

int cmd_simulate(const Run& run, bool export_trajectories) {
  const std::string dir = nri::task_dir(run.out_root, run.spec.id);
  fs::create_directories(dir);
  struct Piece {
    const char* stem;
    int sims;
    std::uint64_t seed;
  };
  std::vector<Piece> pieces;
  if (run.spec.trains() && run.spec.train_sims > 0) {
    pieces.push_back({"train", run.spec.train_sims, nri::task_train_data_seed(run.seed, run.spec.id)});
  }
  pieces.push_back({"test", run.spec.test_sims, nri::task_test_data_seed(run.seed, run.spec.id)});

  for (const Piece& p : pieces) refuse_existing(dir + "/" + p.stem + ".cds", run.force);
  for (const Piece& p : pieces) {
    const std::string path = dir + "/" + p.stem + ".cds";
    std::cerr << "simulating " << p.sims << " " << run.spec.system.kind_str() << " systems -> "
              << path << "\n";
    const nri::TrajectoryDataset d = nri::generate_dataset(run.spec.system, p.sims, p.seed);
    nri::write_dataset(d, path);
    if (export_trajectories) {
      nri::export_trajectories_csv(d, dir + "/trajectories-" + p.stem + ".csv");
    }
  }
  write_manifest(run, "simulate", dir);
  return 0;
}

int cmd_train(const Run& run) {
  if (!run.spec.trains()) {
    throw nri::ContractError("task " + std::to_string(run.spec.id) +
                             " is evaluation-only (reuses task " +
                             std::to_string(run.spec.checkpoint_task) + "'s weights)");
  }
  const std::string dir = nri::task_dir(run.out_root, run.spec.id);
  const std::string data_path = dir + "/train.cds";
  if (!fs::exists(data_path)) {
    throw nri::ContractError("no dataset at '" + data_path + "'; run `nri simulate` first");
  }
  const nri::TrajectoryDataset data = nri::read_dataset(data_path);
  const nri::SystemConfig& sys = data.meta.system;
  if (sys.n_agents != run.spec.model.n_agents ||
      sys.feature_dim() != run.spec.model.feature_dim) {
    throw nri::ContractError("dataset '" + data_path + "' is [n=" + std::to_string(sys.n_agents) +
                             ", D=" + std::to_string(sys.feature_dim()) +
                             "] but the model config expects [n=" +
                             std::to_string(run.spec.model.n_agents) + ", D=" +
                             std::to_string(run.spec.model.feature_dim) + "]");
  }

  nri::TrainConfig tc = run.train;
  tc.seed = nri::task_train_seed(run.seed, run.spec.id);

  const std::string last_path = dir + "/last.ckpt";
  nri::Checkpoint last;
  bool resuming = false;
  if (fs::exists(last_path)) {
    last = nri::read_checkpoint(last_path);
    if (!(last.model == run.spec.model)) {
      throw nri::ContractError("checkpoint '" + last_path +
                               "' was trained with a different model config; remove it to retrain");
    }
    if (last.epoch >= tc.epochs) {
      std::cerr << "training already complete (" << last.epoch << " epochs); nothing to do\n";
      write_manifest(run, "train", dir);
      return 0;
    }
    resuming = true;
    std::cerr << "resuming from epoch " << last.epoch << "\n";
  }
  nri::train_model(run.spec.model, tc, data, dir, resuming ? &last : nullptr, &std::cerr);
  write_manifest(run, "train", dir);
  return 0;
}

int cmd_eval(const Run& run, bool export_adjacency) {
  const std::string dir = nri::task_dir(run.out_root, run.spec.id);
  const std::string data_path = dir + "/test.cds";
  if (!fs::exists(data_path)) {
    throw nri::ContractError("no dataset at '" + data_path + "'; run `nri simulate` first");
  }
  const int ckpt_task = run.spec.trains() ? run.spec.id : run.spec.checkpoint_task;
  const std::string ckpt_path = nri::task_dir(run.out_root, ckpt_task) + "/model.ckpt";
  if (!fs::exists(ckpt_path)) {
    throw nri::ContractError("no checkpoint at '" + ckpt_path + "'; run `nri train" +
                             (ckpt_task == run.spec.id
                                  ? std::string("` first")
                                  : " --task " + std::to_string(ckpt_task) + "` first"));
  }

  const nri::TrajectoryDataset data = nri::read_dataset(data_path);
  const nri::Checkpoint ckpt = nri::read_checkpoint(ckpt_path);
  if (ckpt.model.n_agents != data.meta.system.n_agents ||
      ckpt.model.feature_dim != data.meta.system.feature_dim()) {
    throw nri::ContractError("checkpoint '" + ckpt_path + "' expects [n=" +
                             std::to_string(ckpt.model.n_agents) + ", D=" +
                             std::to_string(ckpt.model.feature_dim) + "] but dataset '" +
                             data_path + "' is [n=" + std::to_string(data.meta.system.n_agents) +
                             ", D=" + std::to_string(data.meta.system.feature_dim()) + "]");
  }

  nri::Model model(ckpt.model, ckpt.seed);
  model.params = ckpt.params;
  const nri::EvalReport report = nri::evaluate(model, data, run.spec.id, run.horizons);
  nri::write_report_json(report, dir + "/report.json");
  if (export_adjacency) nri::export_adjacency_csv(report, data, dir + "/adjacency.csv");
  write_manifest(run, "eval", dir);

  std::cout << "task " << run.spec.id << " (" << run.spec.name << ")\n"
            << "  edge accuracy: " << report.accuracy_mean << " +/- " << report.accuracy_std
            << " %\n";
  for (std::size_t i = 0; i < report.horizons.size(); ++i) {
    std::cout << "  mse@" << report.horizons[i] << ": " << report.mse[i]
              << "   (static baseline " << report.baseline_mse[i] << ")\n";
  }
  return 0;
}

// One table row per evaluated task, reconstructed from report.json files
// and/or rows of a previously emitted table CSV.
struct ReportRow {
  int task_id = 0;
  std::string name;
  double acc_mean = 0.0, acc_std = 0.0;
  double mse10 = -1.0, mse20 = -1.0;  // -1 = not measured

  static std::string csv_header() { return "task,name,accuracy_mean,accuracy_std,mse_10,mse_20"; }
};

std::string task_name_or(int id, const std::string& fallback) {
  if (id >= 1 && id <= 13) return nri::task_spec(id).name;
  return fallback;
}

ReportRow row_from_report(const nri::EvalReport& r) {
  ReportRow row;
  row.task_id = r.task_id;
  row.name = task_name_or(r.task_id, "custom");
  row.acc_mean = r.accuracy_mean;
  row.acc_std = r.accuracy_std;
  for (std::size_t i = 0; i < r.horizons.size(); ++i) {
    if (r.horizons[i] == 10) row.mse10 = r.mse[i];
    if (r.horizons[i] == 20) row.mse20 = r.mse[i];
  }
  return row;
}

std::vector<ReportRow> rows_from_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw nri::FormatError("cannot open '" + path + "'", 0);
  std::string line;
  if (!std::getline(f, line) || line != ReportRow::csv_header()) {
    throw nri::FormatError("'" + path + "' is not a report table (bad header)", 0);
  }
  std::vector<ReportRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cols.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cols.size() != 6) {
      throw nri::FormatError("'" + path + "' row has " + std::to_string(cols.size()) +
                             " columns, expected 6: " + line, 0);
    }
    try {
      ReportRow r;
      r.task_id = std::stoi(cols[0]);
      r.name = cols[1];
      r.acc_mean = std::stod(cols[2]);
      r.acc_std = std::stod(cols[3]);
      r.mse10 = cols[4].empty() ? -1.0 : std::stod(cols[4]);
      r.mse20 = cols[5].empty() ? -1.0 : std::stod(cols[5]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw nri::FormatError("'" + path + "' row is malformed: " + line, 0);
    }
  }
  return rows;
}

void write_rows_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
  out << ReportRow::csv_header() << "\n";
  out.precision(10);
  for (const ReportRow& r : rows) {
    out << r.task_id << ',' << r.name << ',' << r.acc_mean << ',' << r.acc_std << ',';
    if (r.mse10 >= 0) out << r.mse10;
    out << ',';
    if (r.mse20 >= 0) out << r.mse20;
    out << "\n";
  }
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& csv_out) {
  std::vector<ReportRow> rows;
  for (const std::string& in : inputs) {
    if (fs::is_directory(in)) {
      const std::string path = in + "/report.json";
      if (!fs::exists(path)) {
        throw nri::ContractError("'" + in + "' has no report.json; run `nri eval` first");
      }
      rows.push_back(row_from_report(nri::read_report_json(path)));
    } else if (in.size() > 4 && in.substr(in.size() - 4) == ".csv") {
      for (ReportRow& r : rows_from_csv(in)) rows.push_back(std::move(r));
    } else {
      rows.push_back(row_from_report(nri::read_report_json(in)));
    }
  }

  std::printf("%-5s %-34s %18s %12s %12s\n", "task", "system", "accuracy (%)", "mse@10",
              "mse@20");
  for (const ReportRow& r : rows) {
    std::printf("%-5d %-34s %9.3f +- %-6.3f", r.task_id, r.name.c_str(), r.acc_mean, r.acc_std);
    if (r.mse10 >= 0) {
      std::printf(" %12.3e", r.mse10);
    } else {
      std::printf(" %12s", "-");
    }
    if (r.mse20 >= 0) {
      std::printf(" %12.3e\n", r.mse20);
    } else {
      std::printf(" %12s\n", "-");
    }
  }
  if (!csv_out.empty()) {
    std::ofstream f(csv_out, std::ios::trunc);
    if (!f) throw nri::Error("cannot write '" + csv_out + "'");
    write_rows_csv(rows, f);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interaction-network recovery and trajectory forecasting benchmark"};
  app.set_version_flag("--version", NRI_VERSION_STRING);
  app.require_subcommand(1);

  int task = 0;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "runs";
  bool force = false;
  int threads = 0;
  bool export_adjacency = false;
  bool export_trajectories = false;
  std::vector<int> horizons;

  const auto add_common = [&](CLI::App* cmd, bool needs_seed) {
    cmd->add_option("--task", task, "Task id from the built-in catalog (1-13)")
        ->check(CLI::Range(1, 13));
    cmd->add_option("--config", config_path, "JSON config file; flags override its values");
    auto* s = cmd->add_option("--seed", seed, "Master seed (required; runs are reproducible)");
    if (needs_seed) s->required();
    cmd->add_option("--out", out, "Output root directory (default: runs)");
    cmd->add_option("--threads", threads, "Cap on worker threads")->check(CLI::PositiveNumber);
    return cmd;
  };

  CLI::App* sim = add_common(app.add_subcommand("simulate", "Generate datasets for a task"), true);
  sim->add_flag("--force", force, "Overwrite existing outputs");
  sim->add_flag("--export-trajectories", export_trajectories,
                "Also write trajectories as CSV for plotting");

  CLI::App* train = add_common(app.add_subcommand("train", "Fit the model to a dataset"), true);

  CLI::App* eval = add_common(app.add_subcommand("eval", "Evaluate a checkpoint on a test set"), true);
  eval->add_option("--horizon", horizons, "Forecast horizons in frames (default: 10 20)")
      ->delimiter(',');
  eval->add_flag("--export-adjacency", export_adjacency,
                 "Also write predicted/true link types as CSV");

  std::vector<std::string> report_inputs;
  std::string report_csv;
  CLI::App* report = app.add_subcommand("report", "Combine evaluated runs into one table");
  report->add_option("dirs", report_inputs, "Task dirs, report.json files, or table CSVs")
      ->required();
  report->add_option("--csv", report_csv, "Also write the table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0) nri::set_max_threads(threads);
    if (*report) return cmd_report(report_inputs, report_csv);

    const Run run = resolve_run(task, config_path, seed, out, force, horizons);
    if (*sim) return cmd_simulate(run, export_trajectories);
    if (*train) return cmd_train(run);
    if (*eval) return cmd_eval(run, export_adjacency);
  } catch (const nri::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const nri::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
