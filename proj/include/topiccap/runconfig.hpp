#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "topiccap/captioner.hpp"
#include "topiccap/corpus.hpp"
#include "topiccap/sae.hpp"
#include "topiccap/topics.hpp"

namespace topiccap::cli {

struct EvalConfig {
  int beam = 5;
  int max_len = 16;
  std::string split = "val";
};

struct AblateConfig {
  std::vector<int> topic_dims = {8, 16, 32};
  int epochs = 12;
};

// One JSON file per run; every stage reads its own section. `seed` and
// `out_dir` ride on top and are overridable from the command line.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";

  corpus::SyntheticWorldConfig corpus_cfg;
  int corpus_min_count = 1;

  topics::LdaConfig lda;

  sae::SaeTrainConfig sae_cfg;
  sae::Variant sae_variant = sae::Variant::kDenoising;

  captioner::ModelConfig model;  // vocab_size is resolved from the data stage
  captioner::TrainConfig train;

  EvalConfig eval;
  AblateConfig ablate;
};

// Desk-scale defaults; see README for the dial meanings.
RunConfig default_config();

nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& j);

// Load from file (or defaults when path is empty), then apply environment
// overrides of the form TC_<SECTION>_<KEY>=<json value>, e.g.
// TC_LDA_N_TOPICS=8 or TC_TRAIN_GAMMA=0.2. TC_SEED and TC_OUT_DIR override
// the top-level fields.
RunConfig load_config(const std::string& path);

// FNV-1a over the canonical dump; stages use it to fingerprint their inputs.
std::string config_hash(const nlohmann::json& j);

}  // namespace topiccap::cli
