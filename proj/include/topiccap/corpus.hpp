#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "topiccap/tensor.hpp"

namespace topiccap::corpus {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecials = 4;

// Lowercase, strip ASCII punctuation, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
 public:
  Vocabulary() = default;

  // Words with count >= min_count get ids after the specials, ordered by
  // count descending then lexicographic. Throws on an empty caption list.
  static Vocabulary build(const std::vector<std::string>& captions, int min_count);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(id); }
  int id_of(const std::string& word) const;  // kUnkId when absent
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  void save(const std::string& path) const;  // JSON array, specials first
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Caption {
  std::vector<int> token_ids;  // no PAD/BOS/EOS inside
  std::string raw;
};

// Tokenize, map OOV to UNK, truncate to max_len tokens.
Caption encode(const Vocabulary& vocab, const std::string& text, int max_len = 16);
std::string decode(const Vocabulary& vocab, const std::vector<int>& ids);

struct RegionFeatureSet {
  Tensor features;  // [R, D]
  std::string image_id;
  int regions() const { return features.rows(); }
  int dim() const { return features.cols(); }
};

struct DatasetItem {
  RegionFeatureSet image;
  std::vector<Caption> captions;
};

struct CaptionDataset {
  std::vector<DatasetItem> items;
  std::string split;  // train | val | test
  std::vector<std::string> all_raw_captions() const;
};

struct SyntheticWorldConfig {
  int n_objects = 8;
  int n_attributes = 4;
  int n_regions = 9;
  int feature_dim = 32;
  double noise_std = 0.1;
  int captions_per_image = 2;
  int n_train = 100;
  int n_val = 20;
  int n_test = 20;
  int max_caption_len = 16;
  std::uint64_t seed = 1;
};

struct SyntheticWorld {
  std::vector<std::string> object_words;
  std::vector<std::string> attribute_words;
  std::vector<Tensor> object_embeddings;     // per object, [D]
  std::vector<Tensor> attribute_embeddings;  // per attribute, [D]
};

struct SyntheticData {
  SyntheticWorld world;
  CaptionDataset train;
  CaptionDataset val;
  CaptionDataset test;
  // [image][region] -> index of the object that produced the region's
  // features. Parallel to the split datasets; used by diagnostics.
  std::vector<std::vector<int>> region_objects_train;
  std::vector<std::vector<int>> region_objects_val;
  std::vector<std::vector<int>> region_objects_test;
};

// Deterministic scene generator: each image is 2-4 (object, attribute) pairs,
// each region feature is its object embedding plus a scaled attribute
// embedding plus Gaussian noise, and captions are templated sentences naming
// the pairs. Feature values are quantized to float32 so dataset IO round
// trips are lossless.
SyntheticData generate_synthetic_dataset(const SyntheticWorldConfig& cfg);

// Fills token_ids for every caption in the dataset.
void encode_dataset(CaptionDataset& ds, const Vocabulary& vocab, int max_len = 16);

// On-disk layout under dir: manifest.json plus features/<image_id>.bin, one
// little-endian float32 file of exactly R*D values, row-major.
void save_dataset(const CaptionDataset& ds, const std::string& dir);
CaptionDataset load_dataset(const std::string& manifest_path);

}  // namespace topiccap::corpus
