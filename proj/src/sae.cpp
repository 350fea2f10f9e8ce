#include "topiccap/sae.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "topiccap/checkpoint.hpp"
#include "topiccap/errors.hpp"
#include "topiccap/optim.hpp"

namespace topiccap::sae {

namespace {

std::atomic<std::uint64_t> g_decoder_evals{0};

double bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Var bind(Tape& t, Param& p, bool frozen) {
  return frozen ? t.leaf_frozen(p) : t.leaf(p);
}

int argmax(const Tensor& v) {
  int best = 0;
  for (int i = 1; i < v.rows(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

std::string variant_name(Variant v) {
  return v == Variant::kVanilla ? "vanilla" : "denoising";
}

Variant variant_from_name(const std::string& name) {
  if (name == "vanilla") return Variant::kVanilla;
  if (name == "denoising") return Variant::kDenoising;
  throw ConfigError("unknown SAE variant: " + name);
}

SaeModel::SaeModel(int vocab_size_, int hidden_dim_, std::uint64_t seed)
    : vocab_size(vocab_size_), hidden_dim(hidden_dim_) {
  Rng rng(seed);
  params.add("emb", Tensor::uniform({hidden_dim, vocab_size}, bound(hidden_dim), rng));
  nn::add_gru(params, "enc", hidden_dim, hidden_dim, rng);
  nn::add_gru(params, "dec", hidden_dim, hidden_dim, rng);
  params.add("proj.w", Tensor::uniform({vocab_size, hidden_dim}, bound(hidden_dim), rng));
  params.add("proj.b", Tensor::zeros({vocab_size}));
}

DecoderRefs decoder_refs(ParameterSet& ps, const std::string& prefix, int vocab_size,
                         int hidden_dim) {
  const std::string p = prefix.empty() ? "" : prefix + ".";
  DecoderRefs r;
  r.emb = &ps.at(p + "emb");
  r.gru = nn::gru_refs(ps, p + "dec", hidden_dim, hidden_dim);
  r.proj_w = &ps.at(p + "proj.w");
  r.proj_b = &ps.at(p + "proj.b");
  r.vocab_size = vocab_size;
  r.hidden_dim = hidden_dim;
  return r;
}

void copy_decoder_params(const SaeModel& from, ParameterSet& into,
                         const std::string& prefix) {
  const std::string p = prefix.empty() ? "" : prefix + ".";
  for (const char* name : {"emb", "dec.wg", "dec.bg", "dec.wc", "dec.bc",
                           "proj.w", "proj.b"}) {
    into.add(p + name, from.params.at(name).value);
  }
}

corpus::Caption corrupt(const corpus::Caption& caption, double drop_p, Rng& rng) {
  if (drop_p < 0.0 || drop_p >= 1.0) throw ConfigError("drop_p must be in [0, 1)");
  corpus::Caption out;
  out.raw = caption.raw;
  for (int id : caption.token_ids) {
    if (!rng.bernoulli(drop_p)) out.token_ids.push_back(id);
  }
  if (out.token_ids.empty() && !caption.token_ids.empty()) {
    out.token_ids.push_back(
        caption.token_ids[rng.uniform_int(caption.token_ids.size())]);
  }
  return out;
}

Var encode(Tape& t, SaeModel& model, const std::vector<int>& tokens) {
  if (tokens.empty()) throw ShapeError("sae::encode on empty caption");
  auto gru = nn::gru_refs(model.params, "enc", model.hidden_dim, model.hidden_dim);
  Var emb = t.leaf(model.params.at("emb"));
  Var h = t.constant(Tensor::zeros({model.hidden_dim}));
  for (int id : tokens) {
    if (id < 0 || id >= model.vocab_size) throw ShapeError("sae::encode token id out of range");
    h = nn::gru_cell(t, gru, t.embedding_col(emb, id), h);
  }
  return h;
}

namespace {

// Shared decoder unroll. Feeds BOS first; chooses the next input per
// feed_next; accumulates CE against tokens + EOS.
DecodeDiag decode_unroll(Tape& t, const DecoderRefs& dec,
                         const std::vector<int>& target_tokens, Var init_h, bool frozen,
                         const std::function<int(int step, int truth, int own)>& feed_next) {
  g_decoder_evals.fetch_add(1, std::memory_order_relaxed);
  std::vector<int> targets = target_tokens;
  targets.push_back(corpus::kEosId);

  Var emb = bind(t, *dec.emb, frozen);
  Var proj_w = bind(t, *dec.proj_w, frozen);
  Var proj_b = bind(t, *dec.proj_b, frozen);

  DecodeDiag diag;
  Var h = init_h;
  int prev = corpus::kBosId;
  for (std::size_t step = 0; step < targets.size(); ++step) {
    if (step > 0) {
      const int own = argmax(t.val(diag.logits.back()));
      prev = feed_next(static_cast<int>(step), targets[step - 1], own);
      diag.fed_tokens.push_back(prev);
    }
    h = nn::gru_cell(t, dec.gru, t.embedding_col(emb, prev), h, frozen);
    diag.logits.push_back(t.add(t.matvec(proj_w, h), proj_b));
  }
  diag.loss = nn::cross_entropy(t, diag.logits, targets);
  return diag;
}

}  // namespace

DecodeDiag decode_train(Tape& t, SaeModel& model, Var summary,
                        const std::vector<int>& target_tokens, double tf_p, Rng& rng) {
  if (target_tokens.empty()) throw ShapeError("decode_train on empty target");
  auto dec = decoder_refs(model.params, "", model.vocab_size, model.hidden_dim);
  return decode_unroll(t, dec, target_tokens, summary, false,
                       [&](int, int truth, int own) {
                         return rng.bernoulli(tf_p) ? truth : own;
                       });
}

Var decoder_teacher_forced_loss(Tape& t, const DecoderRefs& dec, Var init_h,
                                const std::vector<int>& target_tokens, bool frozen) {
  if (target_tokens.empty()) throw ShapeError("decoder loss on empty target");
  return decode_unroll(t, dec, target_tokens, init_h, frozen,
                       [](int, int truth, int) { return truth; })
      .loss;
}

std::vector<int> reconstruct(SaeModel& model, const std::vector<int>& tokens, int max_len) {
  Tape t;
  Var summary = encode(t, model, tokens);
  auto dec = decoder_refs(model.params, "", model.vocab_size, model.hidden_dim);
  Var emb = t.leaf_frozen(*dec.emb);
  Var proj_w = t.leaf_frozen(*dec.proj_w);
  Var proj_b = t.leaf_frozen(*dec.proj_b);
  g_decoder_evals.fetch_add(1, std::memory_order_relaxed);

  std::vector<int> out;
  Var h = summary;
  int prev = corpus::kBosId;
  for (int step = 0; step < max_len; ++step) {
    h = nn::gru_cell(t, dec.gru, t.embedding_col(emb, prev), h, true);
    Var logits = t.add(t.matvec(proj_w, h), proj_b);
    const int next = argmax(t.val(logits));
    if (next == corpus::kEosId) break;
    out.push_back(next);
    prev = next;
  }
  return out;
}

SaeTrainResult train_sae(const std::vector<corpus::Caption>& captions, int vocab_size,
                         Variant variant, const SaeTrainConfig& cfg) {
  std::vector<const corpus::Caption*> usable;
  for (const auto& c : captions) {
    if (!c.token_ids.empty()) usable.push_back(&c);
  }
  if (usable.empty()) throw ShapeError("train_sae: no non-empty captions");

  Rng rng(cfg.seed);
  SaeTrainResult result;
  result.model = SaeModel(vocab_size, cfg.hidden_dim, rng.next_u64());
  result.model.variant = variant;
  SaeModel& model = result.model;

  nn::Adam adam(model.params, {cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> order(usable.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const corpus::Caption& cap = *usable[idx];
      corpus::Caption input = cap;
      if (variant == Variant::kDenoising) input = corrupt(cap, cfg.drop_p, rng);

      Tape t;
      Var summary = encode(t, model, input.token_ids);
      DecodeDiag diag = decode_train(t, model, summary, cap.token_ids, cfg.tf_p, rng);
      const double loss = t.val(diag.loss).item();
      if (!std::isfinite(loss)) throw NonFiniteError("SAE training diverged");
      loss_sum += loss;
      model.params.zero_grad();
      t.backward(diag.loss);
      nn::clip_global_norm(model.params, cfg.clip_norm);
      adam.step();
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return result;
}

BridgeRefs add_bridge(ParameterSet& ps, const std::string& prefix, int in_dim,
                      int out_dim, Rng& rng) {
  BridgeRefs r;
  r.w = &ps.add(prefix + ".w", Tensor::uniform({out_dim, in_dim}, bound(in_dim), rng));
  r.b = &ps.add(prefix + ".b", Tensor::zeros({out_dim}));
  r.in_dim = in_dim;
  r.out_dim = out_dim;
  return r;
}

BridgeRefs bridge_refs(ParameterSet& ps, const std::string& prefix, int in_dim,
                       int out_dim) {
  return BridgeRefs{&ps.at(prefix + ".w"), &ps.at(prefix + ".b"), in_dim, out_dim};
}

Var regularizer_loss(Tape& t, const DecoderRefs& dec, const BridgeRefs& bridge, Var h,
                     const std::vector<int>& target_tokens, bool frozen) {
  Var init = t.add(t.matvec(t.leaf(*bridge.w), h), t.leaf(*bridge.b));
  return decoder_teacher_forced_loss(t, dec, init, target_tokens, frozen);
}

SaeInit sae_init_from_name(const std::string& name) {
  if (name == "h_first") return SaeInit::kFirst;
  if (name == "h_last") return SaeInit::kLast;
  throw ConfigError("unknown sae_init mode: " + name);
}

std::string sae_init_name(SaeInit mode) {
  return mode == SaeInit::kFirst ? "h_first" : "h_last";
}

Var sae_init_selector(SaeInit mode, const std::vector<Var>& hidden_sequence) {
  if (hidden_sequence.empty()) throw ShapeError("sae_init_selector on empty sequence");
  return mode == SaeInit::kFirst ? hidden_sequence.front() : hidden_sequence.back();
}

std::uint64_t decoder_eval_count() { return g_decoder_evals.load(); }
void reset_decoder_eval_count() { g_decoder_evals.store(0); }

void save_sae(const SaeModel& model, const std::string& path_prefix) {
  nn::CheckpointMeta meta;
  meta.extra["variant"] = variant_name(model.variant);
  meta.extra["vocab_size"] = std::to_string(model.vocab_size);
  meta.extra["hidden_dim"] = std::to_string(model.hidden_dim);
  nn::save_checkpoint(model.params, path_prefix, meta);
}

SaeModel load_sae(const std::string& path_prefix) {
  SaeModel model;
  nn::CheckpointMeta meta = nn::load_checkpoint(model.params, path_prefix);
  model.variant = variant_from_name(meta.extra.at("variant"));
  model.vocab_size = std::stoi(meta.extra.at("vocab_size"));
  model.hidden_dim = std::stoi(meta.extra.at("hidden_dim"));
  return model;
}

}  // namespace topiccap::sae
