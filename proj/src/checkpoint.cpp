#include "tam/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include "tam/serialize.hpp"

namespace tam {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

TensorPtr<float> CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Model<float>& model, std::uint64_t epoch,
                     const std::string& rng_state, Adam<float>* adam) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("TAMC", 4);
  write_u32(os, kCheckpointVersion);

  const auto kv = model.config().to_kv();
  write_u32(os, static_cast<std::uint32_t>(kv.size()));
  for (const auto& [k, v] : kv) {
    write_string(os, k);
    write_string(os, v);
  }
  write_u64(os, epoch);
  write_string(os, rng_state);
  os.put(adam ? 1 : 0);
  if (adam) write_u64(os, static_cast<std::uint64_t>(adam->steps()));

  const auto& reg = model.params();
  const std::uint32_t count =
      static_cast<std::uint32_t>(reg.size() * (adam ? 3 : 1));
  write_u32(os, count);
  for (std::size_t i = 0; i < reg.size(); ++i) {
    write_string(os, reg.names()[i]);
    save_tensor(os, *reg.tensors()[i]);
  }
  if (adam) {
    for (std::size_t i = 0; i < reg.size(); ++i) {
      const auto& p = *reg.tensors()[i];
      Tensor<float> m, v;
      m.shape = p.shape;
      m.data = adam->first_moments()[i];
      v.shape = p.shape;
      v.data = adam->second_moments()[i];
      write_string(os, "adam.m." + reg.names()[i]);
      save_tensor(os, m);
      write_string(os, "adam.v." + reg.names()[i]);
      save_tensor(os, v);
    }
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "TAMC") {
    throw std::runtime_error(path + ": bad checkpoint magic (expected TAMC)");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData ckpt;
  const std::uint32_t n_kv = read_u32(is);
  std::vector<std::pair<std::string, std::string>> kv;
  for (std::uint32_t i = 0; i < n_kv; ++i) {
    auto k = read_string(is);
    auto v = read_string(is);
    kv.emplace_back(std::move(k), std::move(v));
  }
  ckpt.config = ModelConfig::from_kv(kv);
  ckpt.epoch = read_u64(is);
  ckpt.rng_state = read_string(is);
  const int has_adam = is.get();
  if (has_adam != 0 && has_adam != 1) throw std::runtime_error(path + ": corrupt adam flag");
  ckpt.has_adam = has_adam == 1;
  if (ckpt.has_adam) ckpt.adam_steps = static_cast<std::int64_t>(read_u64(is));
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = read_string(is);
    ckpt.tensors.emplace_back(std::move(name), load_tensor<float>(is));
  }
  return ckpt;
}

std::unique_ptr<Model<float>> model_from_checkpoint(const CheckpointData& ckpt) {
  auto model = std::make_unique<Model<float>>(ckpt.config);
  auto& reg = model->params();
  for (std::size_t i = 0; i < reg.size(); ++i) {
    const auto& name = reg.names()[i];
    auto stored = ckpt.find(name);
    if (!stored) throw std::runtime_error("checkpoint is missing parameter " + name);
    auto& p = *reg.tensors()[i];
    if (stored->shape != p.shape) {
      throw std::runtime_error("checkpoint parameter " + name + " has shape " +
                               shape_str(stored->shape) + ", model expects " + shape_str(p.shape));
    }
    p.data = stored->data;
  }
  return model;
}

void restore_adam(const CheckpointData& ckpt, const ParamRegistry<float>& params,
                  Adam<float>& adam) {
  if (!ckpt.has_adam) return;
  adam.set_steps(ckpt.adam_steps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.names()[i];
    auto m = ckpt.find("adam.m." + name);
    auto v = ckpt.find("adam.v." + name);
    if (!m || !v) throw std::runtime_error("checkpoint is missing optimizer state for " + name);
    adam.first_moments()[i] = m->data;
    adam.second_moments()[i] = v->data;
  }
}

}  // namespace tam
