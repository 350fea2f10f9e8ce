#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topiccap/cells.hpp"
#include "topiccap/corpus.hpp"
#include "topiccap/tape.hpp"

namespace topiccap::sae {

using nn::Param;
using nn::ParameterSet;
using nn::Tape;
using nn::Var;

enum class Variant { kVanilla, kDenoising };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// GRU seq2seq auto-encoder with a shared embedding table. Parameter names:
// emb [d, K], enc.* (encoder GRU), dec.* (decoder GRU), proj.w [K, d],
// proj.b [K]. The decoder side (emb, dec.*, proj.*) is what gets attached to
// the captioner as a regularizer.
struct SaeModel {
  SaeModel() = default;
  SaeModel(int vocab_size, int hidden_dim, std::uint64_t seed);

  int vocab_size = 0;
  int hidden_dim = 0;  // d_sae; also the embedding width
  Variant variant = Variant::kDenoising;
  ParameterSet params;
};

// References to one decoder branch (either the SAE's own or a copy embedded
// in a captioner parameter set).
struct DecoderRefs {
  Param* emb = nullptr;
  nn::GruRefs gru;
  Param* proj_w = nullptr;
  Param* proj_b = nullptr;
  int vocab_size = 0;
  int hidden_dim = 0;
};

DecoderRefs decoder_refs(ParameterSet& ps, const std::string& prefix, int vocab_size,
                         int hidden_dim);

// Copies the decoder branch of `from` into `into` under `prefix` (e.g.
// "sae"), so a captioner can own and optionally fine-tune it.
void copy_decoder_params(const SaeModel& from, ParameterSet& into,
                         const std::string& prefix);

// Drops each token independently with probability drop_p; if everything is
// dropped, keeps one token chosen uniformly.
corpus::Caption corrupt(const corpus::Caption& caption, double drop_p, Rng& rng);

// Encoder: last hidden state of the GRU over the embedded tokens.
// Throws on an empty caption.
Var encode(Tape& t, SaeModel& model, const std::vector<int>& tokens);

struct DecodeDiag {
  Var loss;
  std::vector<Var> logits;      // one per step
  std::vector<int> fed_tokens;  // inputs consumed after the BOS embedding
};

// Decoder unroll against tokens + EOS. At each step past the first, the
// ground-truth previous token is fed with probability tf_p, otherwise the
// decoder's own argmax.
DecodeDiag decode_train(Tape& t, SaeModel& model, Var summary,
                        const std::vector<int>& target_tokens, double tf_p, Rng& rng);

// Fully teacher-forced decoder loss from an injected initial hidden state.
// Shared by SAE pre-training (tf_p = 1 path) and the captioner regularizer.
Var decoder_teacher_forced_loss(Tape& t, const DecoderRefs& dec, Var init_h,
                                const std::vector<int>& target_tokens, bool frozen);

// Greedy reconstruction from the model's own encoding, for evaluation.
std::vector<int> reconstruct(SaeModel& model, const std::vector<int>& tokens, int max_len);

struct SaeTrainConfig {
  int hidden_dim = 128;
  double lr = 2e-3;
  int epochs = 30;
  double drop_p = 0.5;  // used by the denoising variant
  double tf_p = 0.5;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
};

struct SaeTrainResult {
  SaeModel model;
  std::vector<double> epoch_loss;  // mean reconstruction CE per epoch
};

SaeTrainResult train_sae(const std::vector<corpus::Caption>& captions, int vocab_size,
                         Variant variant, const SaeTrainConfig& cfg);

// Affine map from the captioner hidden state (n) into the SAE hidden space
// (d_sae); trained with the captioner in both frozen and fine-tune modes.
struct BridgeRefs {
  Param* w = nullptr;  // [d_sae, n]
  Param* b = nullptr;  // [d_sae]
  int in_dim = 0;
  int out_dim = 0;
};

BridgeRefs add_bridge(ParameterSet& ps, const std::string& prefix, int in_dim,
                      int out_dim, Rng& rng);
BridgeRefs bridge_refs(ParameterSet& ps, const std::string& prefix, int in_dim,
                       int out_dim);

// L_sae: teacher-forced decoder loss seeded with bridge(h). Gradients always
// reach h and the bridge; they reach the decoder branch only when not frozen.
Var regularizer_loss(Tape& t, const DecoderRefs& dec, const BridgeRefs& bridge, Var h,
                     const std::vector<int>& target_tokens, bool frozen);

enum class SaeInit { kFirst, kLast };

SaeInit sae_init_from_name(const std::string& name);
std::string sae_init_name(SaeInit mode);

// Selects the captioner hidden state that seeds the regularizer: the state
// after the first step or after the final step.
Var sae_init_selector(SaeInit mode, const std::vector<Var>& hidden_sequence);

// Instrumentation: number of decoder unrolls since process start (or last
// reset). Inference paths must leave it unchanged.
std::uint64_t decoder_eval_count();
void reset_decoder_eval_count();

// Checkpoints in the shared tensor format, with variant recorded.
void save_sae(const SaeModel& model, const std::string& path_prefix);
SaeModel load_sae(const std::string& path_prefix);

}  // namespace topiccap::sae
