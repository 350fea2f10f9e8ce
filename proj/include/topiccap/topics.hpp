#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "topiccap/corpus.hpp"
#include "topiccap/tensor.hpp"

namespace topiccap::topics {

struct LdaConfig {
  int n_topics = 16;
  double alpha = -1.0;  // symmetric Dirichlet over topics; <= 0 means 50/C
  double beta = 0.01;   // symmetric Dirichlet over words
  int train_sweeps = 200;
  int infer_sweeps = 50;
  int n_stopwords = 30;  // most frequent corpus words, excluded from LDA only
  std::uint64_t seed = 1;

  double resolved_alpha() const {
    return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(n_topics);
  }
};

// Collapsed Gibbs sampler over token-topic assignments. Documents are given
// in the compact LDA word-id space. Exposed separately from train_lda so the
// count tables can be audited mid-run.
class GibbsSampler {
 public:
  GibbsSampler(std::vector<std::vector<int>> docs, int n_topics, int vocab_size,
               double alpha, double beta, std::uint64_t seed);

  void sweep();

  // Exact integer equality between the count tables and a recount from the
  // current assignments.
  bool counts_consistent() const;

  // Token log-likelihood under the current smoothed point estimates.
  double log_likelihood() const;

  Tensor estimate_phi() const;  // [C, V], rows sum to 1

  const std::vector<std::vector<int>>& assignments() const { return z_; }
  int n_topics() const { return n_topics_; }
  int vocab_size() const { return vocab_size_; }

 private:
  void add_token(int doc, int word, int topic, int delta);
  int sample_topic(int doc, int word);

  std::vector<std::vector<int>> docs_;
  int n_topics_;
  int vocab_size_;
  double alpha_;
  double beta_;
  std::vector<std::vector<int>> z_;
  std::vector<std::vector<std::int64_t>> doc_topic_;   // [D][C]
  std::vector<std::vector<std::int64_t>> topic_word_;  // [C][V]
  std::vector<std::int64_t> topic_total_;              // [C]
  Rng rng_;
  std::vector<double> scratch_;
};

struct TopicModel {
  int n_topics = 0;
  int vocab_size = 0;  // LDA vocabulary size V
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  Tensor phi;  // [C, V]
  std::vector<int> lda_id_of_vocab;  // captioning vocab id -> LDA id, -1 if excluded
  std::vector<int> vocab_id_of_lda;  // inverse map
  std::vector<double> log_likelihood_trace;           // one entry per sweep
  std::vector<std::vector<int>> final_assignments;    // training state snapshot

  int lda_id(int vocab_id) const {
    return vocab_id >= 0 && vocab_id < static_cast<int>(lda_id_of_vocab.size())
               ? lda_id_of_vocab[vocab_id]
               : -1;
  }
};

// Trains LDA on the captions' token ids. Specials never enter the LDA
// vocabulary; the n_stopwords most frequent remaining words are dropped.
// Throws if every document ends up empty.
TopicModel train_lda(const std::vector<corpus::Caption>& captions,
                     const LdaConfig& cfg);

// Fold-in Gibbs with phi held fixed; returns the alpha-smoothed topic
// histogram. Captions whose tokens are all outside the LDA vocabulary get
// the uniform distribution.
Tensor infer_topic_distribution(const TopicModel& model, const corpus::Caption& caption,
                                int sweeps, std::uint64_t seed);

// Checkpoint: <prefix>.json header (C, V, priors, seed, vocab map) plus
// <prefix>.bin float32 row-major phi.
void save_topic_model(const TopicModel& model, const std::string& path_prefix);
TopicModel load_topic_model(const std::string& path_prefix);

// Per-caption topic priors, keyed by image id, one entry per caption index.
struct QtCache {
  std::map<std::string, std::vector<std::vector<double>>> by_image;

  const std::vector<double>& at(const std::string& image_id, std::size_t caption_idx) const;
  void save(const std::string& path) const;
  static QtCache load(const std::string& path);
};

QtCache compute_qt_cache(const TopicModel& model, const corpus::CaptionDataset& ds,
                         int sweeps, std::uint64_t seed);

}  // namespace topiccap::topics
