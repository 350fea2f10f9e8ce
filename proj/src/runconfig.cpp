#include "topiccap/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include "topiccap/errors.hpp"

extern char** environ;

namespace topiccap::cli {

using nlohmann::json;

RunConfig default_config() {
  RunConfig cfg;
  cfg.lda.n_stopwords = 4;  // templated synthetic corpora have few function words
  cfg.model.use_sae = true;
  cfg.model.sae_frozen = false;
  cfg.train.epochs = 40;
  cfg.train.eval_every = 5;
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["corpus"] = {{"n_objects", cfg.corpus_cfg.n_objects},
                 {"n_attributes", cfg.corpus_cfg.n_attributes},
                 {"n_regions", cfg.corpus_cfg.n_regions},
                 {"feature_dim", cfg.corpus_cfg.feature_dim},
                 {"noise_std", cfg.corpus_cfg.noise_std},
                 {"captions_per_image", cfg.corpus_cfg.captions_per_image},
                 {"n_train", cfg.corpus_cfg.n_train},
                 {"n_val", cfg.corpus_cfg.n_val},
                 {"n_test", cfg.corpus_cfg.n_test},
                 {"max_caption_len", cfg.corpus_cfg.max_caption_len},
                 {"seed", cfg.corpus_cfg.seed},
                 {"min_count", cfg.corpus_min_count}};
  j["lda"] = {{"n_topics", cfg.lda.n_topics},
              {"alpha", cfg.lda.alpha},
              {"beta", cfg.lda.beta},
              {"train_sweeps", cfg.lda.train_sweeps},
              {"infer_sweeps", cfg.lda.infer_sweeps},
              {"n_stopwords", cfg.lda.n_stopwords},
              {"seed", cfg.lda.seed}};
  j["sae"] = {{"hidden_dim", cfg.sae_cfg.hidden_dim},
              {"lr", cfg.sae_cfg.lr},
              {"epochs", cfg.sae_cfg.epochs},
              {"drop_p", cfg.sae_cfg.drop_p},
              {"tf_p", cfg.sae_cfg.tf_p},
              {"clip_norm", cfg.sae_cfg.clip_norm},
              {"seed", cfg.sae_cfg.seed},
              {"variant", sae::variant_name(cfg.sae_variant)}};
  j["captioner"] = {{"feature_dim", cfg.model.feature_dim},
                    {"embed_dim", cfg.model.embed_dim},
                    {"hidden_dim", cfg.model.hidden_dim},
                    {"n_topics", cfg.model.n_topics},
                    {"soft_att_dim", cfg.model.soft_att_dim},
                    {"attention", captioner::attention_name(cfg.model.attention)},
                    {"topic_vector_mode",
                     cfg.model.topic_vector_mode == clta::TopicVectorMode::kAlphaWeighted
                         ? "alpha_weighted"
                         : "uniform_mean"},
                    {"use_sae", cfg.model.use_sae},
                    {"sae_frozen", cfg.model.sae_frozen},
                    {"sae_init", sae::sae_init_name(cfg.model.sae_init)},
                    {"sae_hidden_dim", cfg.model.sae_hidden_dim},
                    {"init_seed", cfg.model.init_seed}};
  j["train"] = {{"lambda_init", cfg.train.lambda_init},
                {"lambda_rate", cfg.train.lambda_rate},
                {"lambda_every", cfg.train.lambda_every},
                {"lambda_cap", cfg.train.lambda_cap},
                {"gamma", cfg.train.gamma},
                {"lr", cfg.train.lr},
                {"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"clip_norm", cfg.train.clip_norm},
                {"max_len", cfg.train.max_len},
                {"eval_every", cfg.train.eval_every},
                {"seed", cfg.train.seed}};
  j["eval"] = {{"beam", cfg.eval.beam},
               {"max_len", cfg.eval.max_len},
               {"split", cfg.eval.split}};
  j["ablate"] = {{"topic_dims", cfg.ablate.topic_dims}, {"epochs", cfg.ablate.epochs}};
  return j;
}

namespace {

template <typename T>
void pull(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig from_json(const json& j) {
  RunConfig cfg = default_config();
  try {
    pull(j, "seed", cfg.seed);
    pull(j, "out_dir", cfg.out_dir);
    if (j.contains("corpus")) {
      const json& c = j["corpus"];
      pull(c, "n_objects", cfg.corpus_cfg.n_objects);
      pull(c, "n_attributes", cfg.corpus_cfg.n_attributes);
      pull(c, "n_regions", cfg.corpus_cfg.n_regions);
      pull(c, "feature_dim", cfg.corpus_cfg.feature_dim);
      pull(c, "noise_std", cfg.corpus_cfg.noise_std);
      pull(c, "captions_per_image", cfg.corpus_cfg.captions_per_image);
      pull(c, "n_train", cfg.corpus_cfg.n_train);
      pull(c, "n_val", cfg.corpus_cfg.n_val);
      pull(c, "n_test", cfg.corpus_cfg.n_test);
      pull(c, "max_caption_len", cfg.corpus_cfg.max_caption_len);
      pull(c, "seed", cfg.corpus_cfg.seed);
      pull(c, "min_count", cfg.corpus_min_count);
    }
    if (j.contains("lda")) {
      const json& c = j["lda"];
      pull(c, "n_topics", cfg.lda.n_topics);
      pull(c, "alpha", cfg.lda.alpha);
      pull(c, "beta", cfg.lda.beta);
      pull(c, "train_sweeps", cfg.lda.train_sweeps);
      pull(c, "infer_sweeps", cfg.lda.infer_sweeps);
      pull(c, "n_stopwords", cfg.lda.n_stopwords);
      pull(c, "seed", cfg.lda.seed);
    }
    if (j.contains("sae")) {
      const json& c = j["sae"];
      pull(c, "hidden_dim", cfg.sae_cfg.hidden_dim);
      pull(c, "lr", cfg.sae_cfg.lr);
      pull(c, "epochs", cfg.sae_cfg.epochs);
      pull(c, "drop_p", cfg.sae_cfg.drop_p);
      pull(c, "tf_p", cfg.sae_cfg.tf_p);
      pull(c, "clip_norm", cfg.sae_cfg.clip_norm);
      pull(c, "seed", cfg.sae_cfg.seed);
      if (c.contains("variant")) {
        cfg.sae_variant = sae::variant_from_name(c["variant"].get<std::string>());
      }
    }
    if (j.contains("captioner")) {
      const json& c = j["captioner"];
      pull(c, "feature_dim", cfg.model.feature_dim);
      pull(c, "embed_dim", cfg.model.embed_dim);
      pull(c, "hidden_dim", cfg.model.hidden_dim);
      pull(c, "n_topics", cfg.model.n_topics);
      pull(c, "soft_att_dim", cfg.model.soft_att_dim);
      if (c.contains("attention")) {
        cfg.model.attention =
            captioner::attention_from_name(c["attention"].get<std::string>());
      }
      if (c.contains("topic_vector_mode")) {
        cfg.model.topic_vector_mode =
            c["topic_vector_mode"].get<std::string>() == "uniform_mean"
                ? clta::TopicVectorMode::kUniformMean
                : clta::TopicVectorMode::kAlphaWeighted;
      }
      pull(c, "use_sae", cfg.model.use_sae);
      pull(c, "sae_frozen", cfg.model.sae_frozen);
      if (c.contains("sae_init")) {
        cfg.model.sae_init = sae::sae_init_from_name(c["sae_init"].get<std::string>());
      }
      pull(c, "sae_hidden_dim", cfg.model.sae_hidden_dim);
      pull(c, "init_seed", cfg.model.init_seed);
    }
    if (j.contains("train")) {
      const json& c = j["train"];
      pull(c, "lambda_init", cfg.train.lambda_init);
      pull(c, "lambda_rate", cfg.train.lambda_rate);
      pull(c, "lambda_every", cfg.train.lambda_every);
      pull(c, "lambda_cap", cfg.train.lambda_cap);
      pull(c, "gamma", cfg.train.gamma);
      pull(c, "lr", cfg.train.lr);
      pull(c, "epochs", cfg.train.epochs);
      pull(c, "batch_size", cfg.train.batch_size);
      pull(c, "clip_norm", cfg.train.clip_norm);
      pull(c, "max_len", cfg.train.max_len);
      pull(c, "eval_every", cfg.train.eval_every);
      pull(c, "seed", cfg.train.seed);
    }
    if (j.contains("eval")) {
      const json& c = j["eval"];
      pull(c, "beam", cfg.eval.beam);
      pull(c, "max_len", cfg.eval.max_len);
      pull(c, "split", cfg.eval.split);
    }
    if (j.contains("ablate")) {
      const json& c = j["ablate"];
      pull(c, "topic_dims", cfg.ablate.topic_dims);
      pull(c, "epochs", cfg.ablate.epochs);
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad config value: " + std::string(e.what()));
  }
  return cfg;
}

namespace {

void apply_env_overrides(json& j) {
  static const std::vector<std::string> sections = {
      "corpus", "lda", "sae", "captioner", "train", "eval", "ablate"};
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind("TC_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(3, eq - 3);
    std::string value = entry.substr(eq + 1);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });

    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // plain string
    }

    if (key == "seed" || key == "out_dir") {
      j[key] = parsed;
      continue;
    }
    for (const auto& section : sections) {
      if (key.rfind(section + "_", 0) == 0) {
        j[section][key.substr(section.size() + 1)] = parsed;
        break;
      }
    }
  }
}

}  // namespace

RunConfig load_config(const std::string& path) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw IoError(IoError::Kind::MissingFile, "missing config file " + path);
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw IoError(IoError::Kind::MalformedManifest,
                    "malformed config: " + std::string(e.what()));
    }
  }
  apply_env_overrides(j);
  return from_json(j);
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace topiccap::cli
