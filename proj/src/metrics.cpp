#include "topiccap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

#include "topiccap/errors.hpp"

namespace topiccap::metrics {

namespace {

using Ngram = std::vector<int>;
using NgramCounts = std::map<Ngram, std::int64_t>;

NgramCounts count_ngrams(const TokenSeq& seq, int n) {
  NgramCounts counts;
  if (static_cast<int>(seq.size()) >= n) {
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
      ++counts[Ngram(seq.begin() + i, seq.begin() + i + n)];
    }
  }
  return counts;
}

void check_inputs(const std::vector<TokenSeq>& candidates,
                  const std::vector<std::vector<TokenSeq>>& references) {
  if (candidates.empty()) throw ShapeError("metrics on empty candidate list");
  if (candidates.size() != references.size()) {
    throw ShapeError("metrics: candidate/reference list length mismatch");
  }
  for (const auto& refs : references) {
    if (refs.empty()) throw ShapeError("metrics: empty reference set");
  }
}

}  // namespace

BleuScores bleu(const std::vector<TokenSeq>& candidates,
                const std::vector<std::vector<TokenSeq>>& references, int max_n) {
  check_inputs(candidates, references);
  std::vector<double> clipped(max_n, 0.0), total(max_n, 0.0);
  std::int64_t cand_len = 0, ref_len = 0;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& cand = candidates[i];
    cand_len += static_cast<std::int64_t>(cand.size());

    // Closest reference length; ties go to the shorter.
    std::int64_t best_ref = static_cast<std::int64_t>(references[i][0].size());
    for (const auto& ref : references[i]) {
      const auto len = static_cast<std::int64_t>(ref.size());
      const auto d_new = std::llabs(len - static_cast<std::int64_t>(cand.size()));
      const auto d_old = std::llabs(best_ref - static_cast<std::int64_t>(cand.size()));
      if (d_new < d_old || (d_new == d_old && len < best_ref)) best_ref = len;
    }
    ref_len += best_ref;

    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts cand_counts = count_ngrams(cand, n);
      NgramCounts max_ref_counts;
      for (const auto& ref : references[i]) {
        for (const auto& [gram, cnt] : count_ngrams(ref, n)) {
          auto& m = max_ref_counts[gram];
          m = std::max(m, cnt);
        }
      }
      for (const auto& [gram, cnt] : cand_counts) {
        auto it = max_ref_counts.find(gram);
        if (it != max_ref_counts.end()) {
          clipped[n - 1] += static_cast<double>(std::min(cnt, it->second));
        }
        total[n - 1] += static_cast<double>(cnt);
      }
    }
  }

  const double bp =
      cand_len >= ref_len || cand_len == 0
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));

  std::vector<double> log_prec(max_n);
  for (int n = 0; n < max_n; ++n) {
    const double p = (total[n] > 0.0 && clipped[n] > 0.0) ? clipped[n] / total[n] : 1e-9;
    log_prec[n] = std::log(p);
  }

  auto score_up_to = [&](int n) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += log_prec[k];
    return bp * std::exp(acc / n);
  };

  BleuScores s;
  s.bleu1 = score_up_to(1);
  if (max_n >= 2) s.bleu2 = score_up_to(2);
  if (max_n >= 3) s.bleu3 = score_up_to(3);
  if (max_n >= 4) s.bleu4 = score_up_to(4);
  return s;
}

std::vector<double> cider_d_per_image(const std::vector<TokenSeq>& candidates,
                                      const std::vector<std::vector<TokenSeq>>& references,
                                      int max_n, double sigma) {
  check_inputs(candidates, references);
  const auto n_images = static_cast<double>(candidates.size());

  // Document frequency of each n-gram over the reference sets.
  std::vector<std::map<Ngram, std::int64_t>> df(max_n);
  for (const auto& refs : references) {
    for (int n = 1; n <= max_n; ++n) {
      std::map<Ngram, bool> seen;
      for (const auto& ref : refs) {
        for (const auto& [gram, cnt] : count_ngrams(ref, n)) seen[gram] = true;
      }
      for (const auto& [gram, _] : seen) ++df[n - 1][gram];
    }
  }
  auto idf = [&](int n, const Ngram& gram) {
    auto it = df[n - 1].find(gram);
    const double d = it == df[n - 1].end() ? 1.0 : static_cast<double>(it->second);
    return std::log((n_images + 1.0) / d);
  };

  struct TfIdfVec {
    std::map<Ngram, double> w;
    double norm = 0.0;
  };
  auto vectorize = [&](const TokenSeq& seq, int n) {
    TfIdfVec v;
    for (const auto& [gram, cnt] : count_ngrams(seq, n)) {
      const double x = static_cast<double>(cnt) * idf(n, gram);
      v.w[gram] = x;
      v.norm += x * x;
    }
    v.norm = std::sqrt(v.norm);
    return v;
  };

  std::vector<double> scores;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TokenSeq& cand = candidates[i];
    double img_score = 0.0;
    for (int n = 1; n <= max_n; ++n) {
      const TfIdfVec vc = vectorize(cand, n);
      double order_score = 0.0;
      for (const auto& ref : references[i]) {
        const TfIdfVec vr = vectorize(ref, n);
        double dot = 0.0;
        for (const auto& [gram, wc] : vc.w) {
          auto it = vr.w.find(gram);
          if (it != vr.w.end()) dot += std::min(wc, it->second) * it->second;
        }
        double sim = 0.0;
        if (vc.norm > 0.0 && vr.norm > 0.0) sim = dot / (vc.norm * vr.norm);
        const double delta =
            static_cast<double>(cand.size()) - static_cast<double>(ref.size());
        sim *= std::exp(-delta * delta / (2.0 * sigma * sigma));
        order_score += sim;
      }
      img_score += order_score / static_cast<double>(references[i].size());
    }
    scores.push_back(10.0 * img_score / static_cast<double>(max_n));
  }
  return scores;
}

double cider_d(const std::vector<TokenSeq>& candidates,
               const std::vector<std::vector<TokenSeq>>& references, int max_n,
               double sigma) {
  const std::vector<double> scores = cider_d_per_image(candidates, references, max_n, sigma);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

}  // namespace topiccap::metrics
