#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nri/eval.hpp"
#include "nri/train.hpp"

namespace nri {

// One row of the benchmark: what to simulate, what model to fit, and at what
// budget. Tasks 12/13 are evaluation-only and borrow another task's weights.
struct TaskSpec {
  int id = 0;
  std::string name;
  SystemConfig system;
  ModelConfig model;
  int train_sims = 1000;
  int test_sims = 200;
  int epochs = 100;
  int checkpoint_task = 0;  // nonzero: evaluate that task's checkpoint, no training

  bool trains() const { return checkpoint_task == 0; }
};

// Built-in catalog, ids 1-13:
//   1-3   springs without walls (n=5 K=2, n=10 K=2, n=5 K=3)
//   4-7   phase oscillators (n=5 and n=10, true vs estimated frequency channel)
//   8-11  springs in a box (square/circle, two sizes each)
//   12-13 task-1 weights on link-free and fully-linked systems
TaskSpec task_spec(int id);
std::vector<int> task_catalog();

// Artifact directory for one task under the run root, e.g. <root>/task-04.
std::string task_dir(const std::string& out_root, int id);

// Seeds for a task's independent random streams, derived from the master
// seed so every task (and every stream within it) is decorrelated.
std::uint64_t task_train_data_seed(std::uint64_t master, int id);
std::uint64_t task_test_data_seed(std::uint64_t master, int id);
std::uint64_t task_train_seed(std::uint64_t master, int id);

// Generates (or reuses) datasets, trains (or resumes/reuses) the model, and
// evaluates on the held-out test set. Artifacts land in task_dir(out_root,
// id): train.cds, test.cds, model.ckpt, last.ckpt, history.csv, report.json.
// An existing artifact is reused only if its recorded config matches the
// spec; a mismatch is an error naming the offending file.
EvalReport run_task(const TaskSpec& spec, const std::string& out_root, std::uint64_t seed,
                    const std::vector<int>& horizons = {10, 20}, std::ostream* log = nullptr,
                    const TrainConfig* train_override = nullptr);

}  // namespace nri
