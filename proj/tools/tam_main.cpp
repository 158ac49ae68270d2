#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tam/checkpoint.hpp"
#include "tam/config.hpp"
#include "tam/dataset.hpp"
#include "tam/grad_suite.hpp"
#include "tam/metrics.hpp"
#include "tam/trainer.hpp"

namespace {

void add_model_options(CLI::App& app, tam::ModelConfig& cfg) {
  app.add_option("--u", cfg.u, "region count per frame");
  app.add_option("--d", cfg.d, "token width");
  app.add_option("--n-heads", cfg.n_heads, "attention heads")->option_text("INT");
  app.add_option("--ffn-hidden", cfg.ffn_hidden, "feed-forward hidden width");
  app.add_option("--image-size", cfg.image_size, "square input size");
  app.add_option("--backbone-channels", cfg.backbone_channels, "last backbone stage width");
  app.add_option("--backbone-stages", cfg.backbone_stages, "stride-2 conv stages");
  app.add_option("--perspectives", cfg.perspectives, "transformer blocks: 1 or 2");
  app.add_option("--concat-mode", cfg.concat_mode, "block concat: token | feature");
  app.add_option("--smoothing", cfg.smoothing, "ts | bts | none");
  app.add_option("--lr", cfg.lr, "Adam learning rate");
  app.add_option("--epochs", cfg.epochs, "training epochs");
  app.add_option("--batch-videos", cfg.batch_videos, "videos per optimizer step");
  app.add_option("--chunk-len", cfg.chunk_len, "max frames per chunk (0 = whole video)");
  app.add_option("--seed", cfg.seed, "master seed");
  app.add_option("--composite-formula", cfg.composite_formula, "sum | mean");
  app.add_option("--target-composite", cfg.target_composite,
                 "stop once the train composite reaches this (0 = off)");
}

// Config-file keys are the long flag names without the leading dashes; a
// flag given on the command line overrides the file.  Applied by a second
// parse over the same bindings because the library only reads config files
// registered on the root command.
void apply_config_file(const CLI::App& cmd, const std::string& path, tam::ModelConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::vector<std::string> args;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string text = CLI::detail::trim_copy(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    const std::string key = eq == std::string::npos ? "" : CLI::detail::trim_copy(text.substr(0, eq));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    const auto* opt = cmd.get_option_no_throw("--" + key);
    if (opt != nullptr && opt->count() > 0) continue;
    args.push_back("--" + key + "=" + CLI::detail::trim_copy(text.substr(eq + 1)));
  }
  CLI::App loader{"config file"};
  loader.set_help_flag();
  add_model_options(loader, cfg);
  std::reverse(args.begin(), args.end());
  try {
    loader.parse(args);
  } catch (const CLI::ParseError& e) {
    throw std::runtime_error("config file " + path + ": " + e.what());
  }
}

int run(int argc, char** argv) {
  CLI::App app{"two-aspect multi-task affect model"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a deterministic synthetic dataset");
  int gen_videos = 8, gen_frames = 16, gen_image = 32;
  std::uint64_t gen_seed = 7;
  double gen_sentinel = 0.0;
  std::string gen_out;
  gen->add_option("--n-videos", gen_videos, "videos to generate");
  gen->add_option("--frames", gen_frames, "frames per video");
  gen->add_option("--image-size", gen_image, "square frame size (multiple of 8)");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--sentinel-fraction", gen_sentinel, "fraction of frames given sentinel labels");
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train on a dataset manifest");
  tam::ModelConfig cfg;
  std::string tr_config, tr_data, tr_out;
  add_model_options(*tr, cfg);
  tr->add_option("--config", tr_config, "flat key=value config file; command-line flags win");
  tr->add_option("--data", tr_data, "manifest CSV path")->required();
  tr->add_option("--out", tr_out, "output directory for checkpoints and log")->required();

  // shared checkpoint+data flags
  std::string ck_path, ev_data, out_path;
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
  ev->add_option("--checkpoint", ck_path, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "manifest CSV path")->required();
  ev->add_option("--out", out_path, "also write the report as a CSV row to this path");

  auto* pr = app.add_subcommand("predict", "write per-frame predictions as CSV");
  pr->add_option("--checkpoint", ck_path, "checkpoint path")->required();
  pr->add_option("--data", ev_data, "manifest CSV path")->required();
  pr->add_option("--out", out_path, "output CSV path")->required();

  auto* ex = app.add_subcommand("export-embeddings", "write per-frame block embeddings as CSV");
  ex->add_option("--checkpoint", ck_path, "checkpoint path")->required();
  ex->add_option("--data", ev_data, "manifest CSV path")->required();
  ex->add_option("--out", out_path, "output CSV path")->required();

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
  bool gc_primitives_only = false;
  std::uint64_t gc_seed = 12345;
  gc->add_flag("--primitives-only", gc_primitives_only, "skip the full-model check");
  gc->add_option("--seed", gc_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*gen) {
    tam::generate_synthetic(gen_videos, gen_frames, gen_image, gen_seed, gen_sentinel, gen_out);
    std::cout << "wrote " << gen_videos << " videos x " << gen_frames << " frames to " << gen_out
              << "\n";
    return 0;
  }
  if (*tr) {
    if (!tr_config.empty()) apply_config_file(*tr, tr_config, cfg);
    cfg.validate();
    auto res = tam::train(cfg, tr_data, tr_out);
    std::cout << "trained " << res.epochs_run << " epochs; best composite "
              << res.best_composite << "\n"
              << "log: " << res.log_file << "\n"
              << "best checkpoint: " << res.best_checkpoint << "\n"
              << "last checkpoint: " << res.last_checkpoint << "\n";
    return 0;
  }
  if (*ev) {
    const auto ckpt = tam::load_checkpoint(ck_path);
    auto model = tam::model_from_checkpoint(ckpt);
    auto videos = tam::sanitize_videos(tam::load_dataset(ev_data));
    if (videos.empty()) throw std::runtime_error("evaluate: no valid frames after sanitization");
    const auto report =
        tam::evaluate_dataset(*model, videos, model->config().composite_formula);
    std::cout << tam::report_to_kv(report, model->config().composite_formula);
    if (!out_path.empty()) {
      std::ofstream os(out_path);
      if (!os) throw std::runtime_error("cannot open for writing: " + out_path);
      os << tam::report_csv_header() << "\n" << tam::report_to_csv_row(report) << "\n";
    }
    return 0;
  }
  if (*pr) {
    const auto ckpt = tam::load_checkpoint(ck_path);
    auto model = tam::model_from_checkpoint(ckpt);
    const auto videos = tam::load_dataset(ev_data);
    tam::predictions_to_csv(*model, videos, out_path);
    std::cout << "wrote predictions to " << out_path << "\n";
    return 0;
  }
  if (*ex) {
    const auto ckpt = tam::load_checkpoint(ck_path);
    auto model = tam::model_from_checkpoint(ckpt);
    const auto videos = tam::load_dataset(ev_data);
    tam::export_embeddings(*model, videos, out_path);
    std::cout << "wrote embeddings to " << out_path << "\n";
    return 0;
  }
  if (*gc) {
    const auto res = tam::run_grad_suite(!gc_primitives_only, gc_seed);
    for (const auto& line : res.lines) std::cout << line << "\n";
    std::printf("gradient suite %s in %.1fs\n", res.ok ? "passed" : "FAILED", res.seconds);
    return res.ok ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
