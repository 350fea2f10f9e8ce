#include "topiccap/topics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "topiccap/errors.hpp"

namespace topiccap::topics {

using nlohmann::json;

GibbsSampler::GibbsSampler(std::vector<std::vector<int>> docs, int n_topics,
                           int vocab_size, double alpha, double beta,
                           std::uint64_t seed)
    : docs_(std::move(docs)),
      n_topics_(n_topics),
      vocab_size_(vocab_size),
      alpha_(alpha),
      beta_(beta),
      rng_(seed),
      scratch_(n_topics) {
  if (n_topics_ < 1 || vocab_size_ < 1) throw ShapeError("invalid LDA dimensions");
  doc_topic_.assign(docs_.size(), std::vector<std::int64_t>(n_topics_, 0));
  topic_word_.assign(n_topics_, std::vector<std::int64_t>(vocab_size_, 0));
  topic_total_.assign(n_topics_, 0);
  z_.resize(docs_.size());
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    z_[d].resize(docs_[d].size());
    for (std::size_t j = 0; j < docs_[d].size(); ++j) {
      const int topic = static_cast<int>(rng_.uniform_int(n_topics_));
      z_[d][j] = topic;
      add_token(static_cast<int>(d), docs_[d][j], topic, +1);
    }
  }
}

void GibbsSampler::add_token(int doc, int word, int topic, int delta) {
  doc_topic_[doc][topic] += delta;
  topic_word_[topic][word] += delta;
  topic_total_[topic] += delta;
}

int GibbsSampler::sample_topic(int doc, int word) {
  const double v_beta = vocab_size_ * beta_;
  double total = 0.0;
  for (int k = 0; k < n_topics_; ++k) {
    const double p = (doc_topic_[doc][k] + alpha_) *
                     (topic_word_[k][word] + beta_) / (topic_total_[k] + v_beta);
    total += p;
    scratch_[k] = total;
  }
  const double u = rng_.uniform() * total;
  for (int k = 0; k < n_topics_; ++k) {
    if (u < scratch_[k]) return k;
  }
  return n_topics_ - 1;
}

void GibbsSampler::sweep() {
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    for (std::size_t j = 0; j < docs_[d].size(); ++j) {
      const int word = docs_[d][j];
      add_token(static_cast<int>(d), word, z_[d][j], -1);
      const int topic = sample_topic(static_cast<int>(d), word);
      z_[d][j] = topic;
      add_token(static_cast<int>(d), word, topic, +1);
    }
  }
}

bool GibbsSampler::counts_consistent() const {
  std::vector<std::vector<std::int64_t>> dt(docs_.size(),
                                            std::vector<std::int64_t>(n_topics_, 0));
  std::vector<std::vector<std::int64_t>> tw(n_topics_,
                                            std::vector<std::int64_t>(vocab_size_, 0));
  std::vector<std::int64_t> tt(n_topics_, 0);
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    for (std::size_t j = 0; j < docs_[d].size(); ++j) {
      ++dt[d][z_[d][j]];
      ++tw[z_[d][j]][docs_[d][j]];
      ++tt[z_[d][j]];
    }
  }
  return dt == doc_topic_ && tw == topic_word_ && tt == topic_total_;
}

double GibbsSampler::log_likelihood() const {
  const double v_beta = vocab_size_ * beta_;
  const double c_alpha = n_topics_ * alpha_;
  double ll = 0.0;
  for (std::size_t d = 0; d < docs_.size(); ++d) {
    if (docs_[d].empty()) continue;
    std::int64_t doc_len = 0;
    for (int k = 0; k < n_topics_; ++k) doc_len += doc_topic_[d][k];
    for (int word : docs_[d]) {
      double p = 0.0;
      for (int k = 0; k < n_topics_; ++k) {
        const double theta = (doc_topic_[d][k] + alpha_) / (doc_len + c_alpha);
        const double phi = (topic_word_[k][word] + beta_) / (topic_total_[k] + v_beta);
        p += theta * phi;
      }
      ll += std::log(p);
    }
  }
  return ll;
}

Tensor GibbsSampler::estimate_phi() const {
  Tensor phi({n_topics_, vocab_size_});
  const double v_beta = vocab_size_ * beta_;
  for (int k = 0; k < n_topics_; ++k) {
    for (int w = 0; w < vocab_size_; ++w) {
      phi.at(k, w) = (topic_word_[k][w] + beta_) / (topic_total_[k] + v_beta);
    }
  }
  return phi;
}

TopicModel train_lda(const std::vector<corpus::Caption>& captions, const LdaConfig& cfg) {
  if (captions.empty()) throw ShapeError("train_lda on empty corpus");
  if (cfg.n_topics < 1 || cfg.train_sweeps < 1) throw ShapeError("invalid LDA config");

  // Corpus frequency over non-special token ids.
  std::map<int, std::int64_t> freq;
  for (const auto& c : captions) {
    for (int id : c.token_ids) {
      if (id >= corpus::kNumSpecials) ++freq[id];
    }
  }
  std::vector<std::pair<int, std::int64_t>> by_freq(freq.begin(), freq.end());
  std::sort(by_freq.begin(), by_freq.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  int max_vocab_id = 0;
  for (const auto& [id, n] : by_freq) max_vocab_id = std::max(max_vocab_id, id);

  TopicModel model;
  model.n_topics = cfg.n_topics;
  model.alpha = cfg.resolved_alpha();
  model.beta = cfg.beta;
  model.seed = cfg.seed;
  model.lda_id_of_vocab.assign(max_vocab_id + 1, -1);
  for (std::size_t rank = 0; rank < by_freq.size(); ++rank) {
    if (rank < static_cast<std::size_t>(cfg.n_stopwords)) continue;
    model.lda_id_of_vocab[by_freq[rank].first] =
        static_cast<int>(model.vocab_id_of_lda.size());
    model.vocab_id_of_lda.push_back(by_freq[rank].first);
  }
  model.vocab_size = static_cast<int>(model.vocab_id_of_lda.size());

  std::vector<std::vector<int>> docs;
  bool any_token = false;
  for (const auto& c : captions) {
    std::vector<int> doc;
    for (int id : c.token_ids) {
      const int lid = model.lda_id(id);
      if (lid >= 0) doc.push_back(lid);
    }
    any_token = any_token || !doc.empty();
    docs.push_back(std::move(doc));
  }
  if (!any_token || model.vocab_size == 0) {
    throw ShapeError("every document is empty after stopword filtering");
  }

  GibbsSampler sampler(std::move(docs), cfg.n_topics, model.vocab_size, model.alpha,
                       model.beta, cfg.seed);
  for (int s = 0; s < cfg.train_sweeps; ++s) {
    sampler.sweep();
    model.log_likelihood_trace.push_back(sampler.log_likelihood());
  }
  model.phi = sampler.estimate_phi();
  model.final_assignments = sampler.assignments();
  return model;
}

Tensor infer_topic_distribution(const TopicModel& model, const corpus::Caption& caption,
                                int sweeps, std::uint64_t seed) {
  const int C = model.n_topics;
  std::vector<int> words;
  for (int id : caption.token_ids) {
    const int lid = model.lda_id(id);
    if (lid >= 0) words.push_back(lid);
  }
  Tensor qt({C});
  if (words.empty()) {
    qt.fill(1.0 / C);
    return qt;
  }

  Rng rng(seed);
  std::vector<std::int64_t> counts(C, 0);
  std::vector<int> z(words.size(), 0);
  std::vector<double> cdf(C);
  auto sample = [&](int word, bool remove_first, std::size_t pos) {
    if (remove_first) --counts[z[pos]];
    double total = 0.0;
    for (int k = 0; k < C; ++k) {
      total += (counts[k] + model.alpha) * model.phi.at(k, word);
      cdf[k] = total;
    }
    const double u = rng.uniform() * total;
    int topic = C - 1;
    for (int k = 0; k < C; ++k) {
      if (u < cdf[k]) {
        topic = k;
        break;
      }
    }
    z[pos] = topic;
    ++counts[topic];
  };

  for (std::size_t j = 0; j < words.size(); ++j) sample(words[j], false, j);
  for (int s = 0; s < sweeps; ++s) {
    for (std::size_t j = 0; j < words.size(); ++j) sample(words[j], true, j);
  }

  const double denom = static_cast<double>(words.size()) + C * model.alpha;
  for (int k = 0; k < C; ++k) qt[k] = (counts[k] + model.alpha) / denom;
  return qt;
}

void save_topic_model(const TopicModel& model, const std::string& path_prefix) {
  json header;
  header["C"] = model.n_topics;
  header["V"] = model.vocab_size;
  header["alpha"] = model.alpha;
  header["beta"] = model.beta;
  header["seed"] = model.seed;
  header["vocab_map"] = model.lda_id_of_vocab;
  std::ofstream jf(path_prefix + ".json");
  if (!jf) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path_prefix + ".json");
  jf << header.dump(2) << "\n";

  std::ofstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path_prefix + ".bin");
  for (std::size_t i = 0; i < model.phi.numel(); ++i) {
    const float v = static_cast<float>(model.phi[i]);
    bf.write(reinterpret_cast<const char*>(&v), 4);
  }
}

TopicModel load_topic_model(const std::string& path_prefix) {
  std::ifstream jf(path_prefix + ".json");
  if (!jf) throw IoError(IoError::Kind::MissingFile, "missing topic model " + path_prefix + ".json");
  json header;
  try {
    jf >> header;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed topic model header: " + std::string(e.what()));
  }
  TopicModel model;
  try {
    model.n_topics = header.at("C").get<int>();
    model.vocab_size = header.at("V").get<int>();
    model.alpha = header.at("alpha").get<double>();
    model.beta = header.at("beta").get<double>();
    model.seed = header.at("seed").get<std::uint64_t>();
    model.lda_id_of_vocab = header.at("vocab_map").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed topic model header: " + std::string(e.what()));
  }
  model.vocab_id_of_lda.assign(model.vocab_size, -1);
  for (std::size_t vid = 0; vid < model.lda_id_of_vocab.size(); ++vid) {
    const int lid = model.lda_id_of_vocab[vid];
    if (lid >= 0) model.vocab_id_of_lda[lid] = static_cast<int>(vid);
  }

  std::ifstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw IoError(IoError::Kind::MissingFile, "missing topic model blob " + path_prefix + ".bin");
  std::vector<char> bytes((std::istreambuf_iterator<char>(bf)),
                          std::istreambuf_iterator<char>());
  const std::size_t expected =
      static_cast<std::size_t>(model.n_topics) * model.vocab_size * 4;
  if (bytes.size() != expected) {
    throw IoError(IoError::Kind::ShapeMismatch, "topic model blob size mismatch");
  }
  model.phi = Tensor({model.n_topics, model.vocab_size});
  for (std::size_t i = 0; i < model.phi.numel(); ++i) {
    float v;
    std::memcpy(&v, bytes.data() + 4 * i, 4);
    model.phi[i] = static_cast<double>(v);
  }
  return model;
}

const std::vector<double>& QtCache::at(const std::string& image_id,
                                       std::size_t caption_idx) const {
  auto it = by_image.find(image_id);
  if (it == by_image.end() || caption_idx >= it->second.size()) {
    throw ShapeError("Q_T cache has no entry for " + image_id + "[" +
                     std::to_string(caption_idx) + "]");
  }
  return it->second[caption_idx];
}

void QtCache::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError(IoError::Kind::WriteFailed, "cannot write Q_T cache " + path);
  f << json(by_image).dump() << "\n";
}

QtCache QtCache::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoError::Kind::MissingFile, "missing Q_T cache " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed Q_T cache: " + std::string(e.what()));
  }
  QtCache cache;
  cache.by_image = j.get<decltype(cache.by_image)>();
  return cache;
}

QtCache compute_qt_cache(const TopicModel& model, const corpus::CaptionDataset& ds,
                         int sweeps, std::uint64_t seed) {
  QtCache cache;
  Rng rng(seed);
  for (const auto& item : ds.items) {
    std::vector<std::vector<double>> per_caption;
    for (const auto& cap : item.captions) {
      const Tensor qt = infer_topic_distribution(model, cap, sweeps, rng.next_u64());
      per_caption.push_back(qt.vec());
    }
    cache.by_image[item.image.image_id] = std::move(per_caption);
  }
  return cache;
}

}  // namespace topiccap::topics
