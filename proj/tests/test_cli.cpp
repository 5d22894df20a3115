#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

// End-to-end checks against the installed binary. CMake passes its location
// through the NRI_CLI environment variable.

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("nri_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  static int counter;
};
int TempDir::counter = 0;

int run_cli(const std::string& args, std::string* output = nullptr) {
  const char* bin = std::getenv("NRI_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "NRI_CLI must point at the nri binary");
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string captured;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) captured += buf;
  const int status = ::pclose(pipe);
  if (output != nullptr) *output = captured;
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

// A configuration small enough that simulate + train + eval finish in seconds.
std::string write_tiny_config(const fs::path& dir) {
  const json cfg = {
      {"system", {{"frames", 31}}},
      {"model", {{"window", 10}, {"hidden", 16}}},
      {"train", {{"epochs", 1}, {"batch_size", 4}}},
      {"sims", {{"train", 8}, {"test", 4}}},
      {"horizons", {5, 10}},
  };
  const fs::path path = dir / "tiny.json";
  std::ofstream f(path);
  f << cfg.dump(2);
  return path.string();
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("the binary reports its version") {
  std::string out;
  CHECK(run_cli("--version", &out) == 0);
  CHECK(!out.empty());
}

TEST_CASE("simulate is deterministic and refuses to clobber its output") {
  TempDir tmp;
  const std::string cfg = write_tiny_config(tmp.path);
  const std::string a = (tmp.path / "a").string();
  const std::string b = (tmp.path / "b").string();
  const std::string common = "--task 1 --seed 7 --config " + cfg;

  CHECK(run_cli("simulate " + common + " --out " + a) == 0);
  CHECK(fs::exists(a + "/task-01/train.cds"));
  CHECK(fs::exists(a + "/task-01/test.cds"));
  CHECK(fs::exists(a + "/task-01/manifest-simulate.json"));

  CHECK(run_cli("simulate " + common + " --out " + b) == 0);
  CHECK(slurp(a + "/task-01/train.cds") == slurp(b + "/task-01/train.cds"));
  CHECK(slurp(a + "/task-01/test.cds") == slurp(b + "/task-01/test.cds"));

  std::string out;
  CHECK(run_cli("simulate " + common + " --out " + a, &out) == 1);
  CHECK(out.find("--force") != std::string::npos);
  CHECK(run_cli("simulate " + common + " --out " + a + " --force") == 0);
}

TEST_CASE("simulate, train, eval, and report form a coherent pipeline") {
  TempDir tmp;
  const std::string cfg = write_tiny_config(tmp.path);
  const std::string out_root = (tmp.path / "runs").string();
  const std::string common = "--task 1 --seed 7 --config " + cfg + " --out " + out_root;
  const std::string dir = out_root + "/task-01";

  REQUIRE(run_cli("simulate " + common) == 0);
  REQUIRE(run_cli("train " + common) == 0);
  CHECK(fs::exists(dir + "/model.ckpt"));
  CHECK(fs::exists(dir + "/last.ckpt"));
  CHECK(fs::exists(dir + "/history.csv"));
  CHECK(fs::exists(dir + "/manifest-train.json"));

  // A second train call sees the finished checkpoint and does nothing.
  std::string out;
  CHECK(run_cli("train " + common, &out) == 0);
  CHECK(out.find("nothing to do") != std::string::npos);

  REQUIRE(run_cli("eval " + common + " --horizon 5,10 --export-adjacency") == 0);
  CHECK(fs::exists(dir + "/adjacency.csv"));
  CHECK(fs::exists(dir + "/manifest-eval.json"));
  const json report = json::parse(slurp(dir + "/report.json"));
  CHECK(report.at("horizons").get<std::vector<int>>() == std::vector<int>{5, 10});
  CHECK(report.at("mse").size() == 2);
  CHECK(report.at("baseline_mse").size() == 2);
  CHECK(report.at("fingerprint").get<std::string>().size() == 16);

  CHECK(run_cli("report " + dir, &out) == 0);
  CHECK(out.find("springs n=5 K=2") != std::string::npos);
  CHECK(out.find("accuracy") != std::string::npos);

  // Table rows survive a round trip through --csv.
  const std::string csv = (tmp.path / "summary.csv").string();
  CHECK(run_cli("report " + dir + " --csv " + csv) == 0);
  std::string again;
  CHECK(run_cli("report " + csv, &again) == 0);
  CHECK(again == out);
}

TEST_CASE("manifests echo the resolved configuration") {
  TempDir tmp;
  const std::string cfg = write_tiny_config(tmp.path);
  const std::string out_root = (tmp.path / "runs").string();
  REQUIRE(run_cli("simulate --task 2 --seed 99 --config " + cfg + " --out " + out_root) == 0);

  const json m = json::parse(slurp(out_root + "/task-02/manifest-simulate.json"));
  CHECK(m.at("seed").get<std::uint64_t>() == 99);
  CHECK(m.at("task").get<int>() == 2);
  CHECK(!m.at("version").get<std::string>().empty());
  CHECK(!m.at("timestamp").get<std::string>().empty());
  CHECK(m.at("config").at("system").at("frames").get<int>() == 31);
  CHECK(m.at("config").at("model").at("window").get<int>() == 10);
}

TEST_CASE("contract violations exit 1 and parse errors are nonzero") {
  TempDir tmp;
  const std::string cfg = write_tiny_config(tmp.path);
  const std::string out_root = (tmp.path / "runs").string();
  std::string out;

  // No dataset yet: both train and eval point the user at simulate.
  CHECK(run_cli("train --task 1 --seed 7 --config " + cfg + " --out " + out_root, &out) == 1);
  CHECK(out.find("simulate") != std::string::npos);
  CHECK(run_cli("eval --task 1 --seed 7 --config " + cfg + " --out " + out_root, &out) == 1);
  CHECK(out.find("simulate") != std::string::npos);

  // Transfer tasks carry no training phase of their own.
  CHECK(run_cli("train --task 12 --seed 7 --out " + out_root, &out) == 1);
  CHECK(out.find("evaluation-only") != std::string::npos);

  CHECK(run_cli("simulate --task 99 --seed 7 --out " + out_root) != 0);
  CHECK(run_cli("simulate --task 1 --seed 7 --no-such-flag") != 0);

  const fs::path bad_key = tmp.path / "bad_key.json";
  std::ofstream(bad_key) << R"({"sytsem": {"frames": 31}})";
  CHECK(run_cli("simulate --task 1 --seed 7 --config " + bad_key.string() + " --out " +
                    out_root + " --force",
                &out) == 1);
  CHECK(out.find("sytsem") != std::string::npos);

  const fs::path bad_json = tmp.path / "bad.json";
  std::ofstream(bad_json) << "{ not json";
  CHECK(run_cli("simulate --task 1 --seed 7 --config " + bad_json.string() + " --out " +
                    out_root + " --force") == 1);
}

TEST_CASE("a missing checkpoint names the task that should have produced it") {
  TempDir tmp;
  const std::string cfg = write_tiny_config(tmp.path);
  const std::string out_root = (tmp.path / "runs").string();
  REQUIRE(run_cli("simulate --task 12 --seed 7 --config " + cfg + " --out " + out_root) == 0);

  std::string out;
  CHECK(run_cli("eval --task 12 --seed 7 --config " + cfg + " --out " + out_root, &out) == 1);
  CHECK(out.find("task-01") != std::string::npos);  // points at task 1's weights
}
