#include "tam/config.hpp"

#include <cstdio>
#include <cstdlib>

namespace tam {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("bad value for config key " + key + ": '" + value + "'");
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) bad_value(key, value);
    return v;
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) bad_value(key, value);
    return v;
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) bad_value(key, value);
    return v;
  } catch (const std::exception&) {
    bad_value(key, value);
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
  return {
      {"u", std::to_string(u)},
      {"d", std::to_string(d)},
      {"n_heads", std::to_string(n_heads)},
      {"ffn_hidden", std::to_string(ffn_hidden)},
      {"image_size", std::to_string(image_size)},
      {"backbone_channels", std::to_string(backbone_channels)},
      {"backbone_stages", std::to_string(backbone_stages)},
      {"perspectives", std::to_string(perspectives)},
      {"concat_mode", concat_mode},
      {"smoothing", smoothing},
      {"lr", fmt_double(lr)},
      {"epochs", std::to_string(epochs)},
      {"batch_videos", std::to_string(batch_videos)},
      {"chunk_len", std::to_string(chunk_len)},
      {"seed", std::to_string(seed)},
      {"composite_formula", composite_formula},
      {"target_composite", fmt_double(target_composite)},
  };
}

ModelConfig ModelConfig::from_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "u") c.u = to_int(key, value);
    else if (key == "d") c.d = to_int(key, value);
    else if (key == "n_heads") c.n_heads = to_int(key, value);
    else if (key == "ffn_hidden") c.ffn_hidden = to_int(key, value);
    else if (key == "image_size") c.image_size = to_int(key, value);
    else if (key == "backbone_channels") c.backbone_channels = to_int(key, value);
    else if (key == "backbone_stages") c.backbone_stages = to_int(key, value);
    else if (key == "perspectives") c.perspectives = to_int(key, value);
    else if (key == "concat_mode") c.concat_mode = value;
    else if (key == "smoothing") c.smoothing = value;
    else if (key == "lr") c.lr = to_double(key, value);
    else if (key == "epochs") c.epochs = to_int(key, value);
    else if (key == "batch_videos") c.batch_videos = to_int(key, value);
    else if (key == "chunk_len") c.chunk_len = to_int(key, value);
    else if (key == "seed") c.seed = to_u64(key, value);
    else if (key == "composite_formula") c.composite_formula = value;
    else if (key == "target_composite") c.target_composite = to_double(key, value);
    else throw std::invalid_argument("unknown config key: " + key);
  }
  c.validate();
  return c;
}

}  // namespace tam
