#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tam/adam.hpp"
#include "tam/config.hpp"
#include "tam/model.hpp"
#include "tam/tensor.hpp"

namespace tam {

// Checkpoint container: "TAMC" magic, format version, the config snapshot
// as a key=value block, training progress (epoch, RNG state), then a table
// of named float32 tensors. Optimizer moments ride in the same table under
// "adam.m.<param>" / "adam.v.<param>".
struct CheckpointData {
  ModelConfig config;
  std::uint64_t epoch = 0;
  std::string rng_state;
  bool has_adam = false;
  std::int64_t adam_steps = 0;
  std::vector<std::pair<std::string, TensorPtr<float>>> tensors;

  TensorPtr<float> find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Model<float>& model, std::uint64_t epoch,
                     const std::string& rng_state, Adam<float>* adam);

CheckpointData load_checkpoint(const std::string& path);

// Builds a model from the checkpoint's own config snapshot and installs the
// stored parameters; shape or name mismatches are load errors.
std::unique_ptr<Model<float>> model_from_checkpoint(const CheckpointData& ckpt);

// Restores optimizer moments and step count saved alongside the parameters.
void restore_adam(const CheckpointData& ckpt, const ParamRegistry<float>& params,
                  Adam<float>& adam);

}  // namespace tam
