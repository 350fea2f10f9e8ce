#include "topiccap/captioner.hpp"

#include <cmath>

#include <json.hpp>

#include "topiccap/checkpoint.hpp"
#include "topiccap/decode.hpp"
#include "topiccap/errors.hpp"
#include "topiccap/metrics.hpp"
#include "topiccap/optim.hpp"

namespace topiccap::captioner {

using nlohmann::json;

AttentionKind attention_from_name(const std::string& name) {
  if (name == "clta") return AttentionKind::kClta;
  if (name == "soft") return AttentionKind::kSoft;
  throw ConfigError("unknown attention kind: " + name);
}

std::string attention_name(AttentionKind kind) {
  return kind == AttentionKind::kClta ? "clta" : "soft";
}

namespace {

double bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

json config_to_json(const ModelConfig& cfg) {
  return json{{"vocab_size", cfg.vocab_size},
              {"feature_dim", cfg.feature_dim},
              {"embed_dim", cfg.embed_dim},
              {"hidden_dim", cfg.hidden_dim},
              {"n_topics", cfg.n_topics},
              {"soft_att_dim", cfg.soft_att_dim},
              {"attention", attention_name(cfg.attention)},
              {"topic_vector_mode",
               cfg.topic_vector_mode == clta::TopicVectorMode::kAlphaWeighted
                   ? "alpha_weighted"
                   : "uniform_mean"},
              {"use_sae", cfg.use_sae},
              {"sae_frozen", cfg.sae_frozen},
              {"sae_init", sae::sae_init_name(cfg.sae_init)},
              {"sae_hidden_dim", cfg.sae_hidden_dim},
              {"init_seed", cfg.init_seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.n_topics = j.at("n_topics").get<int>();
  cfg.soft_att_dim = j.at("soft_att_dim").get<int>();
  cfg.attention = attention_from_name(j.at("attention").get<std::string>());
  cfg.topic_vector_mode = j.at("topic_vector_mode").get<std::string>() == "uniform_mean"
                              ? clta::TopicVectorMode::kUniformMean
                              : clta::TopicVectorMode::kAlphaWeighted;
  cfg.use_sae = j.at("use_sae").get<bool>();
  cfg.sae_frozen = j.at("sae_frozen").get<bool>();
  cfg.sae_init = sae::sae_init_from_name(j.at("sae_init").get<std::string>());
  cfg.sae_hidden_dim = j.at("sae_hidden_dim").get<int>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  return cfg;
}

void init_params(CaptionerModel& model, const sae::SaeModel* pretrained) {
  const ModelConfig& cfg = model.cfg;
  if (cfg.vocab_size <= corpus::kNumSpecials) {
    throw ConfigError("captioner vocab_size must exceed the special tokens");
  }
  Rng rng(cfg.init_seed);
  model.params.add("emb", Tensor::uniform({cfg.embed_dim, cfg.vocab_size},
                                          bound(cfg.embed_dim), rng));
  nn::add_lstm(model.params, "lstm", cfg.lstm_input_dim(), cfg.hidden_dim, rng);
  model.params.add("psi.w",
                   Tensor::uniform({cfg.vocab_size, cfg.hidden_dim + cfg.feature_dim},
                                   bound(cfg.hidden_dim + cfg.feature_dim), rng));
  model.params.add("psi.b", Tensor::zeros({cfg.vocab_size}));
  if (cfg.attention == AttentionKind::kClta) {
    clta::add_clta(model.params, "att", cfg.n_topics, cfg.feature_dim, cfg.hidden_dim, rng);
  } else {
    clta::add_soft_attn(model.params, "att", cfg.soft_att_dim, cfg.feature_dim,
                        cfg.hidden_dim, rng);
  }
  if (cfg.use_sae) {
    sae::add_bridge(model.params, "bridge", cfg.hidden_dim, cfg.sae_hidden_dim, rng);
    if (pretrained != nullptr) {
      if (pretrained->hidden_dim != cfg.sae_hidden_dim ||
          pretrained->vocab_size != cfg.vocab_size) {
        throw ConfigError("pre-trained SAE dimensions do not match captioner config");
      }
      sae::copy_decoder_params(*pretrained, model.params, "sae");
    } else {
      // Fresh decoder branch; used by tests that exercise the objective
      // without a pre-training stage.
      sae::SaeModel fresh(cfg.vocab_size, cfg.sae_hidden_dim, rng.next_u64());
      sae::copy_decoder_params(fresh, model.params, "sae");
    }
  }
}

}  // namespace

CaptionerModel::CaptionerModel(const ModelConfig& cfg_) {
  cfg = cfg_;
  init_params(*this, nullptr);
}

CaptionerModel::CaptionerModel(const ModelConfig& cfg_, const sae::SaeModel& sae_model) {
  cfg = cfg_;
  init_params(*this, &sae_model);
}

nn::LstmRefs CaptionerModel::lstm() {
  return nn::lstm_refs(params, "lstm", cfg.lstm_input_dim(), cfg.hidden_dim);
}

clta::CltaRefs CaptionerModel::clta_attention() {
  return clta::clta_refs(params, "att", cfg.n_topics, cfg.feature_dim, cfg.hidden_dim);
}

clta::SoftAttnRefs CaptionerModel::soft_attention() {
  return clta::soft_attn_refs(params, "att", cfg.soft_att_dim, cfg.feature_dim,
                              cfg.hidden_dim);
}

sae::DecoderRefs CaptionerModel::sae_decoder() {
  return sae::decoder_refs(params, "sae", cfg.vocab_size, cfg.sae_hidden_dim);
}

sae::BridgeRefs CaptionerModel::bridge() {
  return sae::bridge_refs(params, "bridge", cfg.hidden_dim, cfg.sae_hidden_dim);
}

StepState initial_state(Tape& t, const CaptionerModel& model) {
  StepState s;
  s.h = t.constant(Tensor::zeros({model.cfg.hidden_dim}));
  s.c = t.constant(Tensor::zeros({model.cfg.hidden_dim}));
  return s;
}

StepOut step(Tape& t, CaptionerModel& model, StepState& state, int y_prev_id,
             Var features) {
  const ModelConfig& cfg = model.cfg;
  if (y_prev_id < 0 || y_prev_id >= cfg.vocab_size) {
    throw ShapeError("step: token id out of vocabulary");
  }
  StepOut out;
  if (cfg.attention == AttentionKind::kClta) {
    out.att = clta::attend(t, model.clta_attention(), state.h, features,
                           cfg.topic_vector_mode);
  } else {
    out.att = clta::soft_attend(t, model.soft_attention(), state.h, features);
  }

  Var word = t.embedding_col(t.leaf(model.params.at("emb")), y_prev_id);
  std::vector<Var> parts = {out.att.context, word};
  if (cfg.attention == AttentionKind::kClta) parts.push_back(out.att.topic_vector);
  Var x = t.concat(parts);

  auto [h, c] = nn::lstm_cell(t, model.lstm(), x, state.h, state.c);
  state.h = h;
  state.c = c;
  ++state.t;
  if (cfg.attention == AttentionKind::kClta) state.acc.update(t, out.att.topic_vector);

  Var proj_in = t.concat({h, out.att.context});
  out.logits = t.add(t.matvec(t.leaf(model.params.at("psi.w")), proj_in),
                     t.leaf(model.params.at("psi.b")));
  return out;
}

UnrollResult caption_loss(Tape& t, CaptionerModel& model, const Tensor& features,
                          const std::vector<int>& tokens) {
  if (tokens.empty()) throw ShapeError("caption_loss on empty caption");
  Var v = t.constant(features);
  StepState state = initial_state(t, model);

  std::vector<int> targets = tokens;
  targets.push_back(corpus::kEosId);

  UnrollResult out;
  int prev = corpus::kBosId;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    StepOut so = step(t, model, state, prev, v);
    out.logits.push_back(so.logits);
    out.hiddens.push_back(state.h);
    prev = targets[i];
  }
  out.loss = nn::cross_entropy(t, out.logits, targets);
  out.acc = state.acc;
  return out;
}

double lambda_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw ConfigError("negative epoch");
  const double grown =
      cfg.lambda_init * std::pow(cfg.lambda_rate, epoch / cfg.lambda_every);
  return std::min(cfg.lambda_cap, grown);
}

LossBreakdown total_loss(Tape& t, CaptionerModel& model, const Tensor& features,
                         const std::vector<int>& tokens, const Tensor* q_t,
                         const TrainConfig& cfg, int epoch) {
  UnrollResult un = caption_loss(t, model, features, tokens);
  LossBreakdown bd;
  bd.l_lstm = un.loss;
  bd.hiddens = un.hiddens;
  bd.lambda = model.cfg.use_sae ? lambda_at_epoch(cfg, epoch) : 1.0;

  Var total = t.scale(un.loss, bd.lambda);
  if (model.cfg.use_sae) {
    Var seed_h = sae::sae_init_selector(model.cfg.sae_init, un.hiddens);
    bd.l_sae = sae::regularizer_loss(t, model.sae_decoder(), model.bridge(), seed_h,
                                     tokens, model.cfg.sae_frozen);
    total = t.add(total, t.scale(bd.l_sae, 1.0 - bd.lambda));
  }
  if (model.cfg.attention == AttentionKind::kClta && cfg.gamma > 0.0) {
    if (q_t == nullptr) {
      throw ConfigError("total_loss: Q_T prior required when gamma > 0");
    }
    bd.kl = clta::kl_loss(t, un.acc, *q_t);
    total = t.add(total, t.scale(bd.kl, cfg.gamma));
  }
  bd.total = total;
  return bd;
}

namespace {

// Value-level stepper over per-step tapes; no gradients are recorded past
// each step boundary.
struct ValueStepper {
  CaptionerModel& model;
  const Tensor& features;

  struct State {
    Tensor h;
    Tensor c;
    std::vector<double> logprobs;
    std::vector<double> alpha;
    std::vector<double> topic_vector;
  };

  State run(const Tensor& h_in, const Tensor& c_in, int prev) {
    Tape t;
    StepState st;
    st.h = t.constant(h_in);
    st.c = t.constant(c_in);
    Var v = t.constant(features);
    StepOut so = step(t, model, st, prev, v);
    Var lp = t.log_softmax(so.logits);
    State out;
    out.h = t.val(st.h);
    out.c = t.val(st.c);
    out.logprobs = t.val(lp).vec();
    out.alpha = t.val(so.att.alpha).vec();
    if (so.att.topic_vector.valid()) out.topic_vector = t.val(so.att.topic_vector).vec();
    return out;
  }

  State start() {
    const Tensor zero = Tensor::zeros({model.cfg.hidden_dim});
    return run(zero, zero, corpus::kBosId);
  }

  State advance(const State& s, int token) { return run(s.h, s.c, token); }
};

std::vector<int> decoding_candidates(int vocab_size) {
  std::vector<int> allowed;
  for (int k = 0; k < vocab_size; ++k) {
    if (k != corpus::kPadId && k != corpus::kBosId) allowed.push_back(k);
  }
  return allowed;
}

}  // namespace

std::vector<int> greedy_decode(CaptionerModel& model, const Tensor& features,
                               int max_len) {
  ValueStepper stepper{model, features};
  return greedy_decode_generic(stepper, corpus::kEosId,
                               decoding_candidates(model.cfg.vocab_size), max_len);
}

std::vector<int> beam_search(CaptionerModel& model, const Tensor& features, int beam,
                             int max_len) {
  ValueStepper stepper{model, features};
  return beam_search_generic(stepper, corpus::kEosId,
                             decoding_candidates(model.cfg.vocab_size), beam, max_len);
}

std::vector<AttentionTraceStep> greedy_decode_traced(CaptionerModel& model,
                                                     const Tensor& features,
                                                     int max_len) {
  ValueStepper stepper{model, features};
  const std::vector<int> allowed = decoding_candidates(model.cfg.vocab_size);
  std::vector<AttentionTraceStep> trace;
  ValueStepper::State state = stepper.start();
  for (int s = 0; s < max_len; ++s) {
    int best = allowed[0];
    for (int tok : allowed) {
      if (state.logprobs[tok] > state.logprobs[best]) best = tok;
    }
    AttentionTraceStep entry;
    entry.token = best;
    entry.alpha = state.alpha;
    entry.topic_vector = state.topic_vector;
    if (best == corpus::kEosId) break;
    trace.push_back(std::move(entry));
    if (s + 1 < max_len) state = stepper.advance(state, best);
  }
  return trace;
}

TrainResult train(CaptionerModel& model, const corpus::CaptionDataset& train_ds,
                  const topics::QtCache* qt_cache, const TrainConfig& cfg,
                  const corpus::CaptionDataset* val_ds) {
  if (train_ds.items.empty()) throw ConfigError("train: empty dataset");
  const bool needs_qt =
      model.cfg.attention == AttentionKind::kClta && cfg.gamma > 0.0;
  if (needs_qt && qt_cache == nullptr) {
    throw ConfigError("train: Q_T cache required when gamma > 0");
  }

  struct Example {
    std::size_t item;
    std::size_t cap;
  };
  std::vector<Example> examples;
  for (std::size_t i = 0; i < train_ds.items.size(); ++i) {
    for (std::size_t c = 0; c < train_ds.items[i].captions.size(); ++c) {
      if (!train_ds.items[i].captions[c].token_ids.empty()) examples.push_back({i, c});
    }
  }
  if (examples.empty()) throw ConfigError("train: no encoded captions in dataset");

  Rng rng(cfg.seed);
  nn::Adam adam(model.params, {cfg.lr, 0.9, 0.999, 1e-8});
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(examples);
    EpochLog log;
    log.epoch = epoch;
    log.lambda = model.cfg.use_sae ? lambda_at_epoch(cfg, epoch) : 1.0;

    std::size_t done = 0;
    while (done < examples.size()) {
      const std::size_t batch_end =
          std::min(done + static_cast<std::size_t>(cfg.batch_size), examples.size());
      const auto batch_n = static_cast<double>(batch_end - done);
      model.params.zero_grad();
      for (std::size_t e = done; e < batch_end; ++e) {
        const auto& item = train_ds.items[examples[e].item];
        const auto& cap = item.captions[examples[e].cap];
        Tensor qt;
        const Tensor* qt_ptr = nullptr;
        if (needs_qt) {
          const auto& probs = qt_cache->at(item.image.image_id, examples[e].cap);
          qt = Tensor({static_cast<int>(probs.size())}, std::vector<double>(probs));
          qt_ptr = &qt;
        }
        Tape t;
        LossBreakdown bd =
            total_loss(t, model, item.image.features, cap.token_ids, qt_ptr, cfg, epoch);
        const double total = t.val(bd.total).item();
        if (!std::isfinite(total)) {
          throw NonFiniteError("captioner training diverged at epoch " +
                               std::to_string(epoch));
        }
        log.total += total;
        log.l_lstm += t.val(bd.l_lstm).item();
        if (bd.l_sae.valid()) log.l_sae += t.val(bd.l_sae).item();
        if (bd.kl.valid()) log.kl += t.val(bd.kl).item();
        t.backward(bd.total);
      }
      for (auto& p : model.params) {
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] /= batch_n;
      }
      nn::clip_global_norm(model.params, cfg.clip_norm);
      adam.step();
      done = batch_end;
    }

    const auto n = static_cast<double>(examples.size());
    log.total /= n;
    log.l_lstm /= n;
    log.l_sae /= n;
    log.kl /= n;

    if (val_ds != nullptr && cfg.eval_every > 0 &&
        ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)) {
      std::vector<metrics::TokenSeq> cands;
      std::vector<std::vector<metrics::TokenSeq>> refs;
      for (const auto& item : val_ds->items) {
        cands.push_back(greedy_decode(model, item.image.features, cfg.max_len));
        std::vector<metrics::TokenSeq> r;
        for (const auto& c : item.captions) r.push_back(c.token_ids);
        refs.push_back(std::move(r));
      }
      log.evaluated = true;
      log.val_bleu4 = metrics::bleu(cands, refs).bleu4;
      log.val_cider = metrics::cider_d(cands, refs);
    }
    result.log.push_back(log);
  }
  return result;
}

void save_captioner(const CaptionerModel& model, const std::string& path_prefix,
                    std::int64_t step) {
  nn::CheckpointMeta meta;
  meta.step = step;
  meta.extra["model_config"] = config_to_json(model.cfg).dump();
  nn::save_checkpoint(model.params, path_prefix, meta);
}

CaptionerModel load_captioner(const std::string& path_prefix) {
  // Probe the manifest first for the stored config, then load tensors over a
  // freshly initialized model so shapes are validated.
  nn::ParameterSet probe;
  nn::CheckpointMeta meta = nn::load_checkpoint(probe, path_prefix);
  auto it = meta.extra.find("model_config");
  if (it == meta.extra.end()) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "captioner checkpoint lacks model_config");
  }
  CaptionerModel model(config_from_json(json::parse(it->second)));
  nn::load_checkpoint(model.params, path_prefix);
  return model;
}

}  // namespace topiccap::captioner
