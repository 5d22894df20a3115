#pragma once

#include <cstdint>
#include <string>

#include "nri/mlp.hpp"
#include "nri/model.hpp"

namespace nri {

// Everything needed to continue or evaluate a run: model weights, optimizer
// moments, and training progress. Round-trips bit-exactly.
struct Checkpoint {
  ModelConfig model;
  std::uint64_t seed = 0;
  int epoch = 0;              // completed epochs
  long opt_step = 0;          // optimizer steps taken (bias correction)
  double val_accuracy = 0.0;  // validation edge accuracy of these weights
  ParamStore params;
  ParamStore opt_m;  // first-moment tensors, parallel to params
  ParamStore opt_v;  // second-moment tensors, parallel to params
};

// Binary file: magic "NRIM", u32 version, length-prefixed JSON config blob,
// then named float32 tensors (length-prefixed name, u32 rank, u32 dims,
// float32 data).
void write_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace nri
