#include "topiccap/clta.hpp"

#include <cmath>

namespace topiccap::clta {

namespace {

double bound(int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace

CltaRefs add_clta(ParameterSet& ps, const std::string& prefix, int n_topics,
                  int feature_dim, int hidden_dim, Rng& rng) {
  CltaRefs r;
  r.w_sc = &ps.add(prefix + ".w_sc",
                   Tensor::uniform({n_topics, feature_dim}, bound(feature_dim), rng));
  r.w_hc = &ps.add(prefix + ".w_hc",
                   Tensor::uniform({n_topics, hidden_dim}, bound(hidden_dim), rng));
  r.w_sr = &ps.add(prefix + ".w_sr",
                   Tensor::uniform({n_topics, feature_dim}, bound(feature_dim), rng));
  r.w_hr = &ps.add(prefix + ".w_hr",
                   Tensor::uniform({n_topics, hidden_dim}, bound(hidden_dim), rng));
  r.n_topics = n_topics;
  r.feature_dim = feature_dim;
  r.hidden_dim = hidden_dim;
  return r;
}

CltaRefs clta_refs(ParameterSet& ps, const std::string& prefix, int n_topics,
                   int feature_dim, int hidden_dim) {
  return CltaRefs{&ps.at(prefix + ".w_sc"), &ps.at(prefix + ".w_hc"),
                  &ps.at(prefix + ".w_sr"), &ps.at(prefix + ".w_hr"),
                  n_topics, feature_dim, hidden_dim};
}

Var topic_logits(Tape& t, const CltaRefs& p, Var v_i, Var h_prev) {
  return t.add(t.matvec(t.leaf(*p.w_sc), v_i), t.matvec(t.leaf(*p.w_hc), h_prev));
}

Var topic_posterior(Tape& t, Var logits) { return t.softmax_rows(logits); }

Var region_given_topic(Tape& t, Var logits) { return t.softmax_cols(logits); }

AttentionOutput attend(Tape& t, const CltaRefs& p, Var h_prev, Var features,
                       TopicVectorMode mode) {
  const Tensor& v = t.val(features);
  if (v.rank() != 2 || v.cols() != p.feature_dim ||
      t.val(h_prev).rows() != p.hidden_dim) {
    throw ShapeError("attend: input shapes do not match CLTA parameters");
  }
  const int n_regions = v.rows();

  // Topic side: q_i = w_sc v_i + w_hc h, row-softmaxed to P(l | h, v_i).
  Var q = t.add_rowvec(t.matmul_nt(features, t.leaf(*p.w_sc)),
                       t.matvec(t.leaf(*p.w_hc), h_prev));
  Var topics = t.softmax_rows(q);

  // Region side: r_i = w_sr v_i + w_hr h, column-softmaxed to P(i | h, v, l).
  Var r = t.add_rowvec(t.matmul_nt(features, t.leaf(*p.w_sr)),
                       t.matvec(t.leaf(*p.w_hr), h_prev));
  Var regions = t.softmax_cols(r);

  // Marginal weight per region, then an explicit renormalization: the
  // marginalized sum is not a distribution over regions because the topic
  // posterior is conditioned per region.
  Var weights = t.row_sums(t.mul(regions, topics));
  Var alpha = t.div_by_scalar(weights, t.sum(weights));

  AttentionOutput out;
  out.alpha = alpha;
  out.context = t.vecmat(alpha, features);
  out.topic_posterior = topics;
  if (mode == TopicVectorMode::kAlphaWeighted) {
    out.topic_vector = t.vecmat(alpha, topics);
  } else {
    Var uniform = t.constant(Tensor::full({n_regions}, 1.0 / n_regions));
    out.topic_vector = t.vecmat(uniform, topics);
  }
  return out;
}

SoftAttnRefs add_soft_attn(ParameterSet& ps, const std::string& prefix, int att_dim,
                           int feature_dim, int hidden_dim, Rng& rng) {
  SoftAttnRefs r;
  r.w_v = &ps.add(prefix + ".w_v",
                  Tensor::uniform({att_dim, feature_dim}, bound(feature_dim), rng));
  r.w_h = &ps.add(prefix + ".w_h",
                  Tensor::uniform({att_dim, hidden_dim}, bound(hidden_dim), rng));
  r.w = &ps.add(prefix + ".w", Tensor::uniform({att_dim}, bound(att_dim), rng));
  r.att_dim = att_dim;
  r.feature_dim = feature_dim;
  r.hidden_dim = hidden_dim;
  return r;
}

SoftAttnRefs soft_attn_refs(ParameterSet& ps, const std::string& prefix, int att_dim,
                            int feature_dim, int hidden_dim) {
  return SoftAttnRefs{&ps.at(prefix + ".w_v"), &ps.at(prefix + ".w_h"),
                      &ps.at(prefix + ".w"), att_dim, feature_dim, hidden_dim};
}

AttentionOutput soft_attend(Tape& t, const SoftAttnRefs& p, Var h_prev, Var features) {
  const Tensor& v = t.val(features);
  if (v.rank() != 2 || v.cols() != p.feature_dim ||
      t.val(h_prev).rows() != p.hidden_dim) {
    throw ShapeError("soft_attend: input shapes do not match parameters");
  }
  Var pre = t.tanh(t.add_rowvec(t.matmul_nt(features, t.leaf(*p.w_v)),
                                t.matvec(t.leaf(*p.w_h), h_prev)));
  Var scores = t.matvec(pre, t.leaf(*p.w));
  AttentionOutput out;
  out.alpha = t.softmax(scores);
  out.context = t.vecmat(out.alpha, features);
  return out;
}

void TopicAverageAccumulator::update(Tape& t, Var topic_vector) {
  running_sum = steps == 0 ? topic_vector : t.add(running_sum, topic_vector);
  ++steps;
}

Var TopicAverageAccumulator::average(Tape& t) const {
  if (steps == 0) throw ShapeError("topic average of an empty accumulator");
  return t.scale(running_sum, 1.0 / static_cast<double>(steps));
}

Var kl_loss(Tape& t, const TopicAverageAccumulator& acc, const Tensor& q_t) {
  return t.kl_const_q(acc.average(t), q_t);
}

}  // namespace topiccap::clta
