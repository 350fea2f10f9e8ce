#pragma once

#include <string>

#include "topiccap/tape.hpp"

namespace topiccap::clta {

using nn::Param;
using nn::ParameterSet;
using nn::Tape;
using nn::Var;

// Projection matrices of the latent-topic attention: w_sc/w_sr map region
// features (D) and w_hc/w_hr map the decoder hidden state (n) into the
// C-dimensional topic space.
struct CltaRefs {
  Param* w_sc = nullptr;  // [C, D]
  Param* w_hc = nullptr;  // [C, n]
  Param* w_sr = nullptr;  // [C, D]
  Param* w_hr = nullptr;  // [C, n]
  int n_topics = 0;
  int feature_dim = 0;
  int hidden_dim = 0;
};

CltaRefs add_clta(ParameterSet& ps, const std::string& prefix, int n_topics,
                  int feature_dim, int hidden_dim, Rng& rng);
CltaRefs clta_refs(ParameterSet& ps, const std::string& prefix, int n_topics,
                   int feature_dim, int hidden_dim);

// How the per-region topic posteriors are collapsed into the single topic
// vector fed to the decoder.
enum class TopicVectorMode { kAlphaWeighted, kUniformMean };

struct AttentionOutput {
  Var alpha;            // [R] region weights, simplex
  Var context;          // [D] weighted sum of region features
  Var topic_posterior;  // [R, C]; invalid in soft-attention mode
  Var topic_vector;     // [C]; invalid in soft-attention mode
};

// Topic-space logits for one region: w_sc . v_i + w_hc . h_prev.
Var topic_logits(Tape& t, const CltaRefs& p, Var v_i, Var h_prev);

// Row-wise softmax over topics: each row of [R, C] becomes P(l | h, v_i).
Var topic_posterior(Tape& t, Var logits);

// Column-wise softmax over regions: each column of [R, C] becomes
// P(region | h, v, l).
Var region_given_topic(Tape& t, Var logits);

// Latent-topic attention over the region features V [R, D]: marginalizes the
// region-given-topic distributions against the per-region topic posteriors,
// then normalizes the weights to a simplex over regions.
AttentionOutput attend(Tape& t, const CltaRefs& p, Var h_prev, Var features,
                       TopicVectorMode mode = TopicVectorMode::kAlphaWeighted);

// Additive soft attention baseline: alpha = softmax_i(w . tanh(W_v v_i + W_h h)).
struct SoftAttnRefs {
  Param* w_v = nullptr;  // [A, D]
  Param* w_h = nullptr;  // [A, n]
  Param* w = nullptr;    // [A]
  int att_dim = 0;
  int feature_dim = 0;
  int hidden_dim = 0;
};

SoftAttnRefs add_soft_attn(ParameterSet& ps, const std::string& prefix, int att_dim,
                           int feature_dim, int hidden_dim, Rng& rng);
SoftAttnRefs soft_attn_refs(ParameterSet& ps, const std::string& prefix, int att_dim,
                            int feature_dim, int hidden_dim);

AttentionOutput soft_attend(Tape& t, const SoftAttnRefs& p, Var h_prev, Var features);

// Running average of the per-step topic vectors of one decoding episode.
struct TopicAverageAccumulator {
  Var running_sum;  // [C]
  int steps = 0;

  void update(Tape& t, Var topic_vector);
  Var average(Tape& t) const;  // throws if no updates yet
};

// KL(average || q_t) with the cached LDA prior as constant target.
Var kl_loss(Tape& t, const TopicAverageAccumulator& acc, const Tensor& q_t);

}  // namespace topiccap::clta
