#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "topiccap/errors.hpp"
#include "topiccap/pipeline.hpp"
#include "topiccap/runconfig.hpp"

using nlohmann::json;
using namespace topiccap;

namespace {

struct CommonArgs {
  std::string config_path;
  std::int64_t seed = -1;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Run config JSON file");
  cmd->add_option("--seed", args.seed, "Override the top-level seed");
  cmd->add_option("--out", args.out_dir, "Override the output directory");
}

cli::RunConfig resolve(const CommonArgs& args) {
  cli::RunConfig cfg = cli::load_config(args.config_path);
  if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.corpus_cfg.seed = cfg.seed;
    cfg.lda.seed = cfg.seed;
    cfg.sae_cfg.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.model.init_seed = cfg.seed;
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  return cfg;
}

int error_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const IoError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const NonFiniteError*>(&e) != nullptr) return 4;
  return 1;
}

const char* error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return "config";
  if (const auto* io = dynamic_cast<const IoError*>(&e)) {
    switch (io->kind) {
      case IoError::Kind::MalformedManifest: return "malformed_manifest";
      case IoError::Kind::ShapeMismatch: return "shape_mismatch";
      case IoError::Kind::MissingFile: return "missing_file";
      case IoError::Kind::WriteFailed: return "write_failed";
    }
  }
  if (dynamic_cast<const NonFiniteError*>(&e) != nullptr) return "divergence";
  return "internal";
}

int run_guarded(const std::function<json()>& fn) {
  try {
    json summary = fn();
    std::cout << json{{"event", "summary"}, {"summary", summary}}.dump() << "\n";
    if (summary.contains("all_pass") && !summary["all_pass"].get<bool>()) return 1;
    return 0;
  } catch (const std::exception& e) {
    std::cout << json{{"error", {{"type", error_type(e)}, {"message", e.what()}}}}.dump()
              << "\n";
    return error_code(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-prior-guided image captioning pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string features_path;
  bool dump_attention = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  add_common(gen, args);
  auto* lda = app.add_subcommand("train-lda", "Train the LDA topic prior");
  add_common(lda, args);
  auto* sae_cmd = app.add_subcommand("train-sae", "Pre-train the sentence auto-encoder");
  add_common(sae_cmd, args);
  auto* cap = app.add_subcommand("train-captioner", "Train the captioning decoder");
  add_common(cap, args);
  auto* ev = app.add_subcommand("eval", "Score a split with BLEU and CIDEr");
  add_common(ev, args);
  auto* caption = app.add_subcommand("caption", "Caption one image feature file");
  add_common(caption, args);
  caption->add_option("features", features_path, "Raw float32 R*D feature file")
      ->required();
  caption->add_flag("--dump-attention", dump_attention,
                    "Write per-step attention JSON lines");
  auto* gc = app.add_subcommand("gradcheck", "Run the finite-difference battery");
  add_common(gc, args);
  auto* ab = app.add_subcommand("ablate", "Run the topic-dim and SAE-setting grids");
  add_common(ab, args);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    return run_guarded([&] { return cli::cmd_gen_data(resolve(args), &std::cout); });
  }
  if (lda->parsed()) {
    return run_guarded([&] { return cli::cmd_train_lda(resolve(args), &std::cout); });
  }
  if (sae_cmd->parsed()) {
    return run_guarded([&] { return cli::cmd_train_sae(resolve(args), &std::cout); });
  }
  if (cap->parsed()) {
    return run_guarded(
        [&] { return cli::cmd_train_captioner(resolve(args), &std::cout); });
  }
  if (ev->parsed()) {
    return run_guarded([&] { return cli::cmd_eval(resolve(args), &std::cout); });
  }
  if (caption->parsed()) {
    return run_guarded([&] {
      return cli::cmd_caption(resolve(args), features_path, dump_attention, &std::cout);
    });
  }
  if (gc->parsed()) {
    return run_guarded([&] { return cli::cmd_gradcheck(resolve(args), &std::cout); });
  }
  if (ab->parsed()) {
    return run_guarded([&] { return cli::cmd_ablate(resolve(args), &std::cout); });
  }
  return 1;
}
