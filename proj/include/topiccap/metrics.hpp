#pragma once

#include <string>
#include <vector>

namespace topiccap::metrics {

using TokenSeq = std::vector<int>;

struct BleuScores {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
};

// Corpus-level BLEU with per-reference clipping, closest-reference brevity
// penalty and add-epsilon (1e-9) smoothing of zero precisions. references[i]
// is the non-empty reference set for candidates[i].
BleuScores bleu(const std::vector<TokenSeq>& candidates,
                const std::vector<std::vector<TokenSeq>>& references, int max_n = 4);

// CIDEr-D: clipped TF-IDF n-gram cosine, gaussian length penalty, x10.
// Document frequencies come from the reference sets of this corpus; the IDF
// is smoothed as log((N+1)/df) so a corpus of one image can reach the
// maximal score of 10.
double cider_d(const std::vector<TokenSeq>& candidates,
               const std::vector<std::vector<TokenSeq>>& references, int max_n = 4,
               double sigma = 6.0);

// Per-image CIDEr-D contributions (the corpus score is their mean).
std::vector<double> cider_d_per_image(const std::vector<TokenSeq>& candidates,
                                      const std::vector<std::vector<TokenSeq>>& references,
                                      int max_n = 4, double sigma = 6.0);

struct PerImageRecord {
  std::string image_id;
  std::string caption;
  double cider = 0.0;
};

struct EvalReport {
  double bleu1 = 0.0;
  double bleu2 = 0.0;
  double bleu3 = 0.0;
  double bleu4 = 0.0;
  double cider = 0.0;
  int n_images = 0;
  std::vector<PerImageRecord> per_image;
};

}  // namespace topiccap::metrics
