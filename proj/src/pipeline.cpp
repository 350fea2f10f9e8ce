#include "topiccap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "topiccap/errors.hpp"
#include "topiccap/gradcheck.hpp"
#include "topiccap/metrics.hpp"

namespace topiccap::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void emit(std::ostream* log, const json& line) {
  if (log != nullptr) *log << line.dump() << "\n";
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json read_json_file(const fs::path& path, const char* what) {
  std::ifstream f(path);
  if (!f) {
    throw IoError(IoError::Kind::MissingFile,
                  std::string("missing prerequisite artifact: ") + what + " (" +
                      path.string() + "); run the upstream stage first");
  }
  try {
    json j;
    f >> j;
    return j;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  std::string("malformed ") + what + ": " + e.what());
  }
}

fs::path stage_dir(const RunConfig& cfg, const std::string& stage) {
  return fs::path(cfg.out_dir) / stage;
}

// Stamps the common summary fields and writes the stage directory.
json finalize_stage(const RunConfig& cfg, const std::string& stage, json summary,
                    const json& section, const json& inputs,
                    std::chrono::steady_clock::time_point t0) {
  const fs::path dir = stage_dir(cfg, stage);
  fs::create_directories(dir);
  summary["stage"] = stage;
  summary["inputs"] = inputs;
  summary["config_hash"] = config_hash(json{{"section", section}, {"inputs", inputs}});
  summary["wall_seconds"] = seconds_since(t0);
  write_json_file(dir / "resolved_config.json", to_json(cfg));
  write_json_file(dir / "summary.json", summary);
  return summary;
}

json stage_summary(const RunConfig& cfg, const std::string& stage) {
  return read_json_file(stage_dir(cfg, stage) / "summary.json",
                        (stage + " summary").c_str());
}

void check_chain(const json& downstream, const char* input_key,
                 const std::string& expected_hash, const std::string& what) {
  const auto& inputs = downstream.at("inputs");
  if (!inputs.contains(input_key) ||
      inputs.at(input_key).get<std::string>() != expected_hash) {
    throw ConfigError("config cross-inconsistency: " + what);
  }
}

struct LoadedData {
  corpus::Vocabulary vocab;
  corpus::CaptionDataset train;
  corpus::CaptionDataset val;
  corpus::CaptionDataset test;
  std::string hash;
};

LoadedData load_data_stage(const RunConfig& cfg) {
  const fs::path dir = stage_dir(cfg, "data");
  const json summary = stage_summary(cfg, "data");
  LoadedData data;
  data.hash = summary.at("config_hash").get<std::string>();
  data.vocab = corpus::Vocabulary::load((dir / "vocab.json").string());
  data.train = corpus::load_dataset((dir / "train" / "manifest.json").string());
  data.val = corpus::load_dataset((dir / "val" / "manifest.json").string());
  data.test = corpus::load_dataset((dir / "test" / "manifest.json").string());
  const int max_len = cfg.corpus_cfg.max_caption_len;
  corpus::encode_dataset(data.train, data.vocab, max_len);
  corpus::encode_dataset(data.val, data.vocab, max_len);
  corpus::encode_dataset(data.test, data.vocab, max_len);
  return data;
}

std::vector<corpus::Caption> split_captions(const corpus::CaptionDataset& ds) {
  std::vector<corpus::Caption> out;
  for (const auto& item : ds.items) {
    for (const auto& c : item.captions) out.push_back(c);
  }
  return out;
}

// Corpus BLEU-4 of greedy reconstructions against their sources.
double reconstruction_bleu4(sae::SaeModel& model,
                            const std::vector<corpus::Caption>& captions, int max_len) {
  std::vector<metrics::TokenSeq> cands;
  std::vector<std::vector<metrics::TokenSeq>> refs;
  for (const auto& c : captions) {
    if (c.token_ids.empty()) continue;
    cands.push_back(sae::reconstruct(model, c.token_ids, max_len));
    refs.push_back({c.token_ids});
  }
  return metrics::bleu(cands, refs).bleu4;
}

struct EvalOutcome {
  metrics::EvalReport report;
};

EvalOutcome evaluate_split(captioner::CaptionerModel& model,
                           const corpus::CaptionDataset& ds,
                           const corpus::Vocabulary& vocab, int beam, int max_len) {
  EvalOutcome out;
  std::vector<metrics::TokenSeq> cands;
  std::vector<std::vector<metrics::TokenSeq>> refs;
  for (const auto& item : ds.items) {
    cands.push_back(captioner::beam_search(model, item.image.features, beam, max_len));
    std::vector<metrics::TokenSeq> r;
    for (const auto& c : item.captions) r.push_back(c.token_ids);
    refs.push_back(std::move(r));
  }
  auto bleu = metrics::bleu(cands, refs);
  auto per_image = metrics::cider_d_per_image(cands, refs);
  out.report.bleu1 = bleu.bleu1;
  out.report.bleu2 = bleu.bleu2;
  out.report.bleu3 = bleu.bleu3;
  out.report.bleu4 = bleu.bleu4;
  double cider_sum = 0.0;
  for (double v : per_image) cider_sum += v;
  out.report.cider = cider_sum / static_cast<double>(per_image.size());
  out.report.n_images = static_cast<int>(ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    metrics::PerImageRecord rec;
    rec.image_id = ds.items[i].image.image_id;
    rec.caption = corpus::decode(vocab, cands[i]);
    rec.cider = per_image[i];
    out.report.per_image.push_back(std::move(rec));
  }
  return out;
}

void write_train_log(const fs::path& path, const captioner::TrainResult& result) {
  std::ofstream f(path);
  if (!f) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path.string());
  for (const auto& e : result.log) {
    json line{{"epoch", e.epoch},      {"lambda", e.lambda}, {"l_lstm", e.l_lstm},
              {"l_sae", e.l_sae},      {"kl", e.kl},         {"total", e.total}};
    if (e.evaluated) {
      line["bleu4"] = e.val_bleu4;
      line["cider"] = e.val_cider;
    }
    f << line.dump() << "\n";
  }
}

// Shared trainer used by train-captioner and ablate rows.
struct CaptionerRun {
  captioner::CaptionerModel model;
  captioner::TrainResult result;
};

CaptionerRun run_captioner_training(const LoadedData& data,
                                    const captioner::ModelConfig& mc,
                                    const captioner::TrainConfig& tc,
                                    const sae::SaeModel* pretrained,
                                    const topics::QtCache* qt, std::ostream* log) {
  CaptionerRun run;
  run.model = pretrained != nullptr ? captioner::CaptionerModel(mc, *pretrained)
                                    : captioner::CaptionerModel(mc);
  run.result = captioner::train(run.model, data.train, qt, tc, &data.val);
  for (const auto& e : run.result.log) {
    json line{{"event", "epoch"},   {"epoch", e.epoch},   {"lambda", e.lambda},
              {"l_lstm", e.l_lstm}, {"l_sae", e.l_sae},   {"kl", e.kl},
              {"total", e.total}};
    if (e.evaluated) {
      line["bleu4"] = e.val_bleu4;
      line["cider"] = e.val_cider;
    }
    emit(log, line);
  }
  return run;
}

topics::QtCache load_qt_for_model(const RunConfig& cfg, const LoadedData& data,
                                  int expected_topics) {
  const json lda_summary = stage_summary(cfg, "lda");
  check_chain(lda_summary, "data", data.hash,
              "the LDA cache was built from different data");
  if (lda_summary.at("n_topics").get<int>() != expected_topics) {
    throw ConfigError(
        "config cross-inconsistency: LDA topic count does not match the captioner");
  }
  return topics::QtCache::load((stage_dir(cfg, "lda") / "qt_cache.json").string());
}

}  // namespace

json cmd_gen_data(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  auto data = corpus::generate_synthetic_dataset(cfg.corpus_cfg);
  auto vocab = corpus::Vocabulary::build(data.train.all_raw_captions(),
                                         cfg.corpus_min_count);

  const fs::path dir = stage_dir(cfg, "data");
  fs::create_directories(dir);
  corpus::save_dataset(data.train, (dir / "train").string());
  corpus::save_dataset(data.val, (dir / "val").string());
  corpus::save_dataset(data.test, (dir / "test").string());
  vocab.save((dir / "vocab.json").string());

  json summary{{"n_train", data.train.items.size()},
               {"n_val", data.val.items.size()},
               {"n_test", data.test.items.size()},
               {"vocab_size", vocab.size()},
               {"feature_dim", cfg.corpus_cfg.feature_dim},
               {"n_regions", cfg.corpus_cfg.n_regions}};
  emit(log, json{{"event", "gen_data"}, {"vocab_size", vocab.size()}});
  return finalize_stage(cfg, "data", std::move(summary), to_json(cfg)["corpus"],
                        json::object(), t0);
}

json cmd_train_lda(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_data_stage(cfg);
  auto captions = split_captions(data.train);
  auto model = topics::train_lda(captions, cfg.lda);
  auto cache = topics::compute_qt_cache(model, data.train, cfg.lda.infer_sweeps,
                                        cfg.lda.seed);

  const fs::path dir = stage_dir(cfg, "lda");
  fs::create_directories(dir);
  topics::save_topic_model(model, (dir / "model").string());
  cache.save((dir / "qt_cache.json").string());

  json summary{{"n_topics", model.n_topics},
               {"lda_vocab_size", model.vocab_size},
               {"documents", captions.size()},
               {"ll_first_sweep", model.log_likelihood_trace.front()},
               {"ll_last_sweep", model.log_likelihood_trace.back()}};
  emit(log, json{{"event", "lda_trained"},
                 {"ll_last", model.log_likelihood_trace.back()}});
  return finalize_stage(cfg, "lda", std::move(summary), to_json(cfg)["lda"],
                        json{{"data", data.hash}}, t0);
}

json cmd_train_sae(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_data_stage(cfg);
  auto captions = split_captions(data.train);
  auto result = sae::train_sae(captions, data.vocab.size(), cfg.sae_variant, cfg.sae_cfg);

  const fs::path dir = stage_dir(cfg, "sae");
  fs::create_directories(dir);
  sae::save_sae(result.model, (dir / "sae").string());

  const double recon =
      reconstruction_bleu4(result.model, split_captions(data.test),
                           cfg.corpus_cfg.max_caption_len);
  json summary{{"variant", sae::variant_name(cfg.sae_variant)},
               {"hidden_dim", cfg.sae_cfg.hidden_dim},
               {"epochs", cfg.sae_cfg.epochs},
               {"first_epoch_loss", result.epoch_loss.front()},
               {"final_epoch_loss", result.epoch_loss.back()},
               {"reconstruction_bleu4_test", recon}};
  emit(log, json{{"event", "sae_trained"},
                 {"final_loss", result.epoch_loss.back()},
                 {"reconstruction_bleu4", recon}});
  return finalize_stage(cfg, "sae", std::move(summary), to_json(cfg)["sae"],
                        json{{"data", data.hash}}, t0);
}

json cmd_train_captioner(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_data_stage(cfg);

  captioner::ModelConfig mc = cfg.model;
  mc.vocab_size = data.vocab.size();
  if (mc.feature_dim != cfg.corpus_cfg.feature_dim) {
    throw ConfigError(
        "config cross-inconsistency: captioner feature_dim differs from the dataset");
  }

  json inputs{{"data", data.hash}};
  sae::SaeModel pretrained;
  const sae::SaeModel* pretrained_ptr = nullptr;
  if (mc.use_sae) {
    const json sae_summary = stage_summary(cfg, "sae");
    check_chain(sae_summary, "data", data.hash,
                "the SAE was pre-trained on different data");
    pretrained = sae::load_sae((stage_dir(cfg, "sae") / "sae").string());
    if (pretrained.hidden_dim != mc.sae_hidden_dim) {
      throw ConfigError(
          "config cross-inconsistency: SAE hidden size does not match the captioner");
    }
    pretrained_ptr = &pretrained;
    inputs["sae"] = sae_summary.at("config_hash").get<std::string>();
  }

  topics::QtCache cache;
  const topics::QtCache* cache_ptr = nullptr;
  if (mc.attention == captioner::AttentionKind::kClta && cfg.train.gamma > 0.0) {
    cache = load_qt_for_model(cfg, data, mc.n_topics);
    cache_ptr = &cache;
    inputs["lda"] = stage_summary(cfg, "lda").at("config_hash").get<std::string>();
  }

  CaptionerRun run =
      run_captioner_training(data, mc, cfg.train, pretrained_ptr, cache_ptr, log);

  const fs::path dir = stage_dir(cfg, "captioner");
  fs::create_directories(dir);
  captioner::save_captioner(run.model, (dir / "model").string(),
                            static_cast<std::int64_t>(cfg.train.epochs));
  write_train_log(dir / "train_log.jsonl", run.result);

  const auto& last = run.result.log.back();
  json summary{{"epochs", cfg.train.epochs},
               {"attention", captioner::attention_name(mc.attention)},
               {"use_sae", mc.use_sae},
               {"final_l_lstm", last.l_lstm},
               {"final_l_sae", last.l_sae},
               {"final_kl", last.kl},
               {"final_lambda", last.lambda},
               {"n_parameters", run.model.params.total_elements()}};
  if (last.evaluated) {
    summary["final_val_bleu4"] = last.val_bleu4;
    summary["final_val_cider"] = last.val_cider;
  }
  return finalize_stage(cfg, "captioner", std::move(summary),
                        json{{"captioner", to_json(cfg)["captioner"]},
                             {"train", to_json(cfg)["train"]}},
                        inputs, t0);
}

json cmd_eval(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_data_stage(cfg);
  const json cap_summary = stage_summary(cfg, "captioner");
  check_chain(cap_summary, "data", data.hash,
              "the captioner was trained on different data");
  auto model =
      captioner::load_captioner((stage_dir(cfg, "captioner") / "model").string());

  const corpus::CaptionDataset* split = &data.val;
  if (cfg.eval.split == "test") split = &data.test;
  if (cfg.eval.split == "train") split = &data.train;

  auto outcome =
      evaluate_split(model, *split, data.vocab, cfg.eval.beam, cfg.eval.max_len);

  const fs::path dir = stage_dir(cfg, "eval");
  fs::create_directories(dir);
  json per_image = json::array();
  {
    std::ofstream csv(dir / "per_image.csv");
    csv << "image_id,cider,caption\n";
    for (const auto& rec : outcome.report.per_image) {
      per_image.push_back({{"image_id", rec.image_id},
                           {"cider", rec.cider},
                           {"caption", rec.caption}});
      csv << rec.image_id << "," << rec.cider << ",\"" << rec.caption << "\"\n";
    }
  }
  json report{{"bleu1", outcome.report.bleu1},
              {"bleu2", outcome.report.bleu2},
              {"bleu3", outcome.report.bleu3},
              {"bleu4", outcome.report.bleu4},
              {"cider", outcome.report.cider},
              {"n_images", outcome.report.n_images},
              {"per_image", per_image}};
  write_json_file(dir / "report.json", report);

  emit(log, json{{"event", "eval"},
                 {"split", cfg.eval.split},
                 {"bleu4", outcome.report.bleu4},
                 {"cider", outcome.report.cider}});
  json summary{{"split", cfg.eval.split},
               {"beam", cfg.eval.beam},
               {"bleu1", outcome.report.bleu1},
               {"bleu2", outcome.report.bleu2},
               {"bleu3", outcome.report.bleu3},
               {"bleu4", outcome.report.bleu4},
               {"cider", outcome.report.cider},
               {"n_images", outcome.report.n_images}};
  return finalize_stage(cfg, "eval", std::move(summary), to_json(cfg)["eval"],
                        json{{"data", data.hash},
                             {"captioner", cap_summary.at("config_hash")}},
                        t0);
}

json cmd_caption(const RunConfig& cfg, const std::string& features_path,
                 bool attention_dump, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path data_dir = stage_dir(cfg, "data");
  auto vocab = corpus::Vocabulary::load((data_dir / "vocab.json").string());
  const json cap_summary = stage_summary(cfg, "captioner");
  auto model =
      captioner::load_captioner((stage_dir(cfg, "captioner") / "model").string());

  std::ifstream bf(features_path, std::ios::binary);
  if (!bf) {
    throw IoError(IoError::Kind::MissingFile, "missing feature file " + features_path);
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(bf)),
                          std::istreambuf_iterator<char>());
  const int d = model.cfg.feature_dim;
  if (bytes.size() % (4 * static_cast<std::size_t>(d)) != 0 || bytes.empty()) {
    throw IoError(IoError::Kind::ShapeMismatch,
                  "feature payload is not a whole number of " + std::to_string(d) +
                      "-float rows");
  }
  const int r = static_cast<int>(bytes.size() / (4 * static_cast<std::size_t>(d)));
  Tensor features({r, d});
  for (std::size_t i = 0; i < features.numel(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    features[i] = static_cast<double>(v);
  }

  auto tokens =
      captioner::beam_search(model, features, cfg.eval.beam, cfg.eval.max_len);
  const std::string text = corpus::decode(vocab, tokens);

  const fs::path dir = stage_dir(cfg, "caption");
  fs::create_directories(dir);
  if (attention_dump) {
    // Re-walk the emitted tokens teacher-forced so the dump matches the
    // reported caption step by step.
    std::ofstream dump(dir / "attention.jsonl");
    nn::Tape t;
    auto state = captioner::initial_state(t, model);
    nn::Var v = t.constant(features);
    int prev = corpus::kBosId;
    for (int tok : tokens) {
      auto out = captioner::step(t, model, state, prev, v);
      json line{{"word", vocab.token(tok)}, {"alpha", t.val(out.att.alpha).vec()}};
      if (out.att.topic_vector.valid()) {
        const Tensor& tv = t.val(out.att.topic_vector);
        line["topic_vector"] = tv.vec();
        std::vector<int> order(tv.numel());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return tv[a] > tv[b]; });
        order.resize(std::min<std::size_t>(5, order.size()));
        line["top_topics"] = order;
      }
      dump << line.dump() << "\n";
      prev = tok;
    }
  }

  json summary{{"caption", text},
               {"tokens", tokens},
               {"n_regions", r},
               {"beam", cfg.eval.beam},
               {"attention_dump", attention_dump}};
  emit(log, json{{"event", "caption"}, {"caption", text}});
  return finalize_stage(cfg, "caption", std::move(summary), to_json(cfg)["eval"],
                        json{{"captioner", cap_summary.at("config_hash")}}, t0);
}

json cmd_gradcheck(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);

  auto random_features = [&](int r, int d) {
    Tensor t({r, d});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
  };

  json checks = json::array();
  bool all_pass = true;
  auto record = [&](const std::string& name, const nn::GradCheckReport& report) {
    const bool pass = report.max_rel_err < 1e-4;
    all_pass = all_pass && pass;
    checks.push_back({{"name", name},
                      {"max_rel_err", report.max_rel_err},
                      {"worst", report.worst_param},
                      {"pass", pass}});
    emit(log, json{{"event", "gradcheck"},
                   {"name", name},
                   {"max_rel_err", report.max_rel_err},
                   {"pass", pass}});
  };

  {
    nn::ParameterSet ps;
    auto lstm = nn::add_lstm(ps, "lstm", 3, 4, rng);
    ps.add("x", Tensor::uniform({3}, 1.0, rng));
    ps.add("h", Tensor::uniform({4}, 0.5, rng));
    ps.add("c", Tensor::uniform({4}, 0.5, rng));
    record("lstm_cell", nn::grad_check(ps, [&](nn::Tape& t) {
      auto [h, c] = nn::lstm_cell(t, lstm, t.leaf(ps.at("x")), t.leaf(ps.at("h")),
                                  t.leaf(ps.at("c")));
      return t.add(t.mean(h), t.scale(t.mean(c), 0.5));
    }));
  }
  {
    nn::ParameterSet ps;
    auto gru = nn::add_gru(ps, "gru", 3, 4, rng);
    ps.add("x", Tensor::uniform({3}, 1.0, rng));
    ps.add("h", Tensor::uniform({4}, 0.5, rng));
    record("gru_cell", nn::grad_check(ps, [&](nn::Tape& t) {
      return t.mean(nn::gru_cell(t, gru, t.leaf(ps.at("x")), t.leaf(ps.at("h"))));
    }));
  }
  {
    nn::ParameterSet ps;
    auto refs = clta::add_clta(ps, "att", 4, 5, 6, rng);
    ps.add("h", Tensor::uniform({6}, 1.0, rng));
    ps.add("v", Tensor::uniform({3, 5}, 1.0, rng));
    Tensor ra = Tensor::uniform({5}, 1.0, rng);
    Tensor rt = Tensor::uniform({4}, 1.0, rng);
    record("clta_attend", nn::grad_check(ps, [&](nn::Tape& t) {
      auto out = clta::attend(t, refs, t.leaf(ps.at("h")), t.leaf(ps.at("v")));
      return t.add(t.sum(t.mul(out.context, t.constant(ra))),
                   t.sum(t.mul(out.topic_vector, t.constant(rt))));
    }));
  }
  {
    nn::ParameterSet ps;
    auto refs = clta::add_soft_attn(ps, "att", 4, 5, 6, rng);
    ps.add("h", Tensor::uniform({6}, 1.0, rng));
    ps.add("v", Tensor::uniform({3, 5}, 1.0, rng));
    Tensor ra = Tensor::uniform({5}, 1.0, rng);
    record("soft_attend", nn::grad_check(ps, [&](nn::Tape& t) {
      auto out = clta::soft_attend(t, refs, t.leaf(ps.at("h")), t.leaf(ps.at("v")));
      return t.sum(t.mul(out.context, t.constant(ra)));
    }));
  }
  {
    captioner::ModelConfig mc;
    mc.vocab_size = 12;
    mc.feature_dim = 5;
    mc.embed_dim = 6;
    mc.hidden_dim = 8;
    mc.n_topics = 4;
    mc.init_seed = rng.next_u64();
    captioner::CaptionerModel model(mc);
    Tensor v = random_features(3, 5);
    record("step3_cross_entropy",
           nn::grad_check(
               model.params,
               [&](nn::Tape& t) {
                 return captioner::caption_loss(t, model, v, {4, 5, 6}).loss;
               },
               1e-5, 8));
  }
  {
    captioner::TrainConfig tc;
    Tensor qt({4}, {0.4, 0.3, 0.2, 0.1});
    int mode = 0;
    for (auto att : {captioner::AttentionKind::kClta, captioner::AttentionKind::kSoft}) {
      for (bool use_sae : {true, false}) {
        captioner::ModelConfig mc;
        mc.vocab_size = 12;
        mc.feature_dim = 5;
        mc.embed_dim = 6;
        mc.hidden_dim = 8;
        mc.n_topics = 4;
        mc.soft_att_dim = 5;
        mc.attention = att;
        mc.use_sae = use_sae;
        mc.sae_frozen = false;
        mc.sae_hidden_dim = 7;
        mc.init_seed = rng.next_u64();
        captioner::CaptionerModel model(mc);
        Tensor v = random_features(3, 5);
        const std::string name = "objective_" + captioner::attention_name(att) +
                                 (use_sae ? "_sae" : "_plain");
        record(name, nn::grad_check(
                         model.params,
                         [&](nn::Tape& t) {
                           return captioner::total_loss(t, model, v, {4, 5, 6}, &qt,
                                                        tc, 3)
                               .total;
                         },
                         1e-5, 6));
        ++mode;
      }
    }
    (void)mode;
  }

  json summary{{"checks", checks}, {"all_pass", all_pass}};
  return finalize_stage(cfg, "gradcheck", std::move(summary), json{{"seed", cfg.seed}},
                        json::object(), t0);
}

json cmd_ablate(const RunConfig& cfg, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData data = load_data_stage(cfg);

  captioner::TrainConfig tc = cfg.train;
  tc.epochs = cfg.ablate.epochs;
  tc.eval_every = 0;

  json rows = json::array();
  auto eval_row = [&](const std::string& name, captioner::CaptionerModel& model) {
    auto outcome =
        evaluate_split(model, data.val, data.vocab, cfg.eval.beam, cfg.eval.max_len);
    rows.push_back({{"name", name},
                    {"bleu4", outcome.report.bleu4},
                    {"cider", outcome.report.cider}});
    emit(log, json{{"event", "ablate_row"},
                   {"name", name},
                   {"bleu4", outcome.report.bleu4},
                   {"cider", outcome.report.cider}});
  };

  // Topic-dimension sweep: CLTA alone, one LDA prior per dimension.
  for (int c_topics : cfg.ablate.topic_dims) {
    topics::LdaConfig lc = cfg.lda;
    lc.n_topics = c_topics;
    auto lda = topics::train_lda(split_captions(data.train), lc);
    auto cache = topics::compute_qt_cache(lda, data.train, lc.infer_sweeps, lc.seed);

    captioner::ModelConfig mc = cfg.model;
    mc.vocab_size = data.vocab.size();
    mc.attention = captioner::AttentionKind::kClta;
    mc.n_topics = c_topics;
    mc.use_sae = false;
    CaptionerRun run = run_captioner_training(data, mc, tc, nullptr, &cache, log);
    eval_row("clta-" + std::to_string(c_topics), run.model);
  }

  // SAE grid: variant x seed hidden state, CLTA fixed at the configured size.
  topics::LdaConfig lc = cfg.lda;
  lc.n_topics = cfg.model.n_topics;
  auto lda = topics::train_lda(split_captions(data.train), lc);
  auto cache = topics::compute_qt_cache(lda, data.train, lc.infer_sweeps, lc.seed);
  for (auto variant : {sae::Variant::kVanilla, sae::Variant::kDenoising}) {
    auto sae_result =
        sae::train_sae(split_captions(data.train), data.vocab.size(), variant,
                       cfg.sae_cfg);
    for (auto init : {sae::SaeInit::kFirst, sae::SaeInit::kLast}) {
      captioner::ModelConfig mc = cfg.model;
      mc.vocab_size = data.vocab.size();
      mc.attention = captioner::AttentionKind::kClta;
      mc.use_sae = true;
      mc.sae_frozen = false;
      mc.sae_init = init;
      mc.sae_hidden_dim = cfg.sae_cfg.hidden_dim;
      CaptionerRun run =
          run_captioner_training(data, mc, tc, &sae_result.model, &cache, log);
      eval_row("sae-" + sae::variant_name(variant) + "-" + sae::sae_init_name(init),
               run.model);
    }
  }

  const fs::path dir = stage_dir(cfg, "ablate");
  fs::create_directories(dir);
  write_json_file(dir / "grid.json", rows);

  json summary{{"rows", rows}, {"epochs_per_row", cfg.ablate.epochs}};
  return finalize_stage(cfg, "ablate", std::move(summary),
                        json{{"ablate", to_json(cfg)["ablate"]},
                             {"captioner", to_json(cfg)["captioner"]}},
                        json{{"data", data.hash}}, t0);
}

}  // namespace topiccap::cli
