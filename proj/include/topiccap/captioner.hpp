#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "topiccap/cells.hpp"
#include "topiccap/clta.hpp"
#include "topiccap/corpus.hpp"
#include "topiccap/sae.hpp"
#include "topiccap/tape.hpp"
#include "topiccap/topics.hpp"

namespace topiccap::captioner {

using nn::ParameterSet;
using nn::Tape;
using nn::Var;

enum class AttentionKind { kClta, kSoft };

AttentionKind attention_from_name(const std::string& name);
std::string attention_name(AttentionKind kind);

struct ModelConfig {
  int vocab_size = 0;
  int feature_dim = 32;   // D
  int embed_dim = 64;     // m
  int hidden_dim = 128;   // n
  int n_topics = 16;      // C (CLTA mode)
  int soft_att_dim = 64;  // baseline attention width
  AttentionKind attention = AttentionKind::kClta;
  clta::TopicVectorMode topic_vector_mode = clta::TopicVectorMode::kAlphaWeighted;
  bool use_sae = false;
  bool sae_frozen = true;
  sae::SaeInit sae_init = sae::SaeInit::kLast;
  int sae_hidden_dim = 128;  // must match the pre-trained SAE
  std::uint64_t init_seed = 1;

  // LSTM input is [context | word embedding | topic vector], the last
  // segment only in CLTA mode.
  int lstm_input_dim() const {
    return feature_dim + embed_dim +
           (attention == AttentionKind::kClta ? n_topics : 0);
  }
};

// Decoder LSTM with latent-topic (or baseline soft) attention, output
// projection over [h | context], and optionally the SAE regularizer branch
// (decoder copy under "sae.*", bridge under "bridge.*").
class CaptionerModel {
 public:
  CaptionerModel() = default;
  explicit CaptionerModel(const ModelConfig& cfg);
  CaptionerModel(const ModelConfig& cfg, const sae::SaeModel& pretrained_sae);

  ModelConfig cfg;
  ParameterSet params;

  nn::LstmRefs lstm();
  clta::CltaRefs clta_attention();
  clta::SoftAttnRefs soft_attention();
  sae::DecoderRefs sae_decoder();
  sae::BridgeRefs bridge();
};

struct StepState {
  Var h;
  Var c;
  clta::TopicAverageAccumulator acc;
  int t = 0;
};

StepState initial_state(Tape& t, const CaptionerModel& model);

struct StepOut {
  Var logits;  // [K]
  clta::AttentionOutput att;
};

// One decode step: attend from the previous hidden state, advance the LSTM
// on [context | E y_prev | topic vector], project [h' | context] to vocab
// logits. Updates the state (and the topic accumulator in CLTA mode).
StepOut step(Tape& t, CaptionerModel& model, StepState& state, int y_prev_id,
             Var features);

struct UnrollResult {
  Var loss;                  // mean CE against tokens + EOS
  std::vector<Var> logits;   // one per step
  std::vector<Var> hiddens;  // h after each step
  clta::TopicAverageAccumulator acc;
};

// Teacher-forced unroll from BOS with h0 = c0 = 0.
UnrollResult caption_loss(Tape& t, CaptionerModel& model, const Tensor& features,
                          const std::vector<int>& tokens);

struct TrainConfig {
  double lambda_init = 0.7;
  double lambda_rate = 1.1;
  int lambda_every = 5;  // epochs
  double lambda_cap = 0.9;
  double gamma = 0.1;
  double lr = 2e-4;
  int epochs = 50;
  int batch_size = 8;
  double clip_norm = 5.0;
  int max_len = 16;
  int eval_every = 1;  // epochs between val evaluations; 0 disables
  std::uint64_t seed = 1;
};

// min(cap, init * rate^floor(epoch / every)); treated as 1 when the SAE
// branch is off.
double lambda_at_epoch(const TrainConfig& cfg, int epoch);

struct LossBreakdown {
  Var total;
  Var l_lstm;
  Var l_sae;  // invalid when the SAE branch is off
  Var kl;     // invalid when gamma = 0 or soft attention
  double lambda = 1.0;
  std::vector<Var> hiddens;
};

// Weighted objective: lambda * L_lstm + (1 - lambda) * L_sae + gamma * KL.
// q_t is required when gamma > 0 in CLTA mode.
LossBreakdown total_loss(Tape& t, CaptionerModel& model, const Tensor& features,
                         const std::vector<int>& tokens, const Tensor* q_t,
                         const TrainConfig& cfg, int epoch);

std::vector<int> greedy_decode(CaptionerModel& model, const Tensor& features,
                               int max_len);
std::vector<int> beam_search(CaptionerModel& model, const Tensor& features, int beam,
                             int max_len);

// Per-step attention values captured during a plain decode, for inspection.
struct AttentionTraceStep {
  int token = -1;
  std::vector<double> alpha;
  std::vector<double> topic_vector;  // empty in soft mode
};

std::vector<AttentionTraceStep> greedy_decode_traced(CaptionerModel& model,
                                                     const Tensor& features,
                                                     int max_len);

struct EpochLog {
  int epoch = 0;
  double lambda = 1.0;
  double l_lstm = 0.0;
  double l_sae = 0.0;
  double kl = 0.0;
  double total = 0.0;
  bool evaluated = false;
  double val_bleu4 = 0.0;
  double val_cider = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

// Minibatch Adam over total_loss; one caption = one example. Deterministic
// per seed. Throws NonFiniteError if the loss diverges.
TrainResult train(CaptionerModel& model, const corpus::CaptionDataset& train_ds,
                  const topics::QtCache* qt_cache, const TrainConfig& cfg,
                  const corpus::CaptionDataset* val_ds = nullptr);

void save_captioner(const CaptionerModel& model, const std::string& path_prefix,
                    std::int64_t step = 0);
CaptionerModel load_captioner(const std::string& path_prefix);

}  // namespace topiccap::captioner
