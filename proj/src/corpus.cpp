#include "topiccap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <set>
#include <fstream>

#include <json.hpp>

#include "topiccap/errors.hpp"

namespace topiccap::corpus {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!word.empty()) {
        out.push_back(word);
        word.clear();
      }
    } else if (std::ispunct(c)) {
      continue;
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!word.empty()) out.push_back(word);
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int min_count) {
  if (captions.empty()) throw ShapeError("cannot build vocabulary from zero captions");
  if (min_count < 1) throw ShapeError("min_count must be >= 1");
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& c : captions) {
    for (const auto& w : tokenize(c)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [w, n] : counts) {
    if (n >= min_count) kept.emplace_back(w, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const auto& [w, n] : kept) v.tokens_.push_back(w);
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) v.index_[v.tokens_[i]] = i;
  return v;
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnkId : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError(IoError::Kind::WriteFailed, "cannot write vocabulary " + path);
  f << json(tokens_).dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoError::Kind::MissingFile, "missing vocabulary file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed vocabulary file: " + std::string(e.what()));
  }
  Vocabulary v;
  v.tokens_ = j.get<std::vector<std::string>>();
  if (v.tokens_.size() < kNumSpecials) {
    throw IoError(IoError::Kind::MalformedManifest, "vocabulary missing special tokens");
  }
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) v.index_[v.tokens_[i]] = i;
  return v;
}

Caption encode(const Vocabulary& vocab, const std::string& text, int max_len) {
  Caption c;
  c.raw = text;
  for (const auto& w : tokenize(text)) {
    if (static_cast<int>(c.token_ids.size()) >= max_len) break;
    c.token_ids.push_back(vocab.id_of(w));
  }
  return c;
}

std::string decode(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += " ";
    out += vocab.token(id);
  }
  return out;
}

std::vector<std::string> CaptionDataset::all_raw_captions() const {
  std::vector<std::string> out;
  for (const auto& item : items) {
    for (const auto& c : item.captions) out.push_back(c.raw);
  }
  return out;
}

namespace {

const char* kObjectPool[] = {"ball", "box",  "dog",  "cat",  "tree", "car",  "cup",
                             "hat",  "bird", "fish", "book", "lamp", "boat", "star",
                             "drum", "cake", "frog", "bell", "kite", "shoe"};
const char* kAttributePool[] = {"red",  "blue", "green", "small", "large", "shiny",
                                "old",  "round", "dark", "pale",  "tall",  "tiny"};

std::vector<std::string> word_list(const char* const* pool, int pool_size, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    if (i < pool_size) {
      out.push_back(pool[i]);
    } else {
      out.push_back(std::string(pool[i % pool_size]) + std::to_string(i / pool_size + 1));
    }
  }
  return out;
}

struct ScenePair {
  int object;
  int attribute;
};

std::string render_caption(const std::vector<ScenePair>& pairs, int template_id,
                           const SyntheticWorld& world) {
  auto phrase = [&](const ScenePair& p) {
    return world.attribute_words[p.attribute] + " " + world.object_words[p.object];
  };
  const std::string p0 = phrase(pairs[0]);
  const std::string p1 = phrase(pairs[1 % pairs.size()]);
  std::string s;
  switch (template_id % 6) {
    case 0: s = "a " + p0 + " next to a " + p1; break;
    case 1: s = "the " + p0 + " sits near a " + p1; break;
    case 2: s = "a " + p1 + " beside the " + p0; break;
    case 3: s = "there is a " + p0 + " and a " + p1; break;
    case 4: s = "a photo of a " + p0 + " with a " + p1; break;
    default: s = "the " + p1 + " stands behind a " + p0; break;
  }
  if (pairs.size() >= 3) s += " and a " + phrase(pairs[2]);
  return s;
}

float quantize(double v) { return static_cast<float>(v); }

}  // namespace

SyntheticData generate_synthetic_dataset(const SyntheticWorldConfig& cfg) {
  if (cfg.n_objects < 2 || cfg.n_attributes < 1 || cfg.n_regions < 1 ||
      cfg.feature_dim < 1 || cfg.captions_per_image < 1 || cfg.noise_std < 0.0 ||
      cfg.n_train < 1 || cfg.n_val < 0 || cfg.n_test < 0) {
    throw ShapeError("invalid synthetic world config");
  }
  Rng rng(cfg.seed);
  SyntheticData data;
  SyntheticWorld& world = data.world;
  world.object_words = word_list(kObjectPool, 20, cfg.n_objects);
  world.attribute_words = word_list(kAttributePool, 12, cfg.n_attributes);
  for (int i = 0; i < cfg.n_objects; ++i) {
    world.object_embeddings.push_back(Tensor::uniform({cfg.feature_dim}, 1.0, rng));
  }
  for (int i = 0; i < cfg.n_attributes; ++i) {
    world.attribute_embeddings.push_back(Tensor::uniform({cfg.feature_dim}, 1.0, rng));
  }

  auto make_split = [&](const std::string& name, int count, CaptionDataset& ds,
                        std::vector<std::vector<int>>& region_objects) {
    ds.split = name;
    for (int img = 0; img < count; ++img) {
      const int n_pairs = 2 + static_cast<int>(rng.uniform_int(3));  // 2..4
      std::vector<int> object_ids(cfg.n_objects);
      for (int i = 0; i < cfg.n_objects; ++i) object_ids[i] = i;
      rng.shuffle(object_ids);
      std::vector<ScenePair> pairs;
      for (int i = 0; i < std::min(n_pairs, cfg.n_objects); ++i) {
        pairs.push_back({object_ids[i], static_cast<int>(rng.uniform_int(cfg.n_attributes))});
      }

      DatasetItem item;
      item.image.image_id = name + "_" + std::to_string(img);
      item.image.features = Tensor({cfg.n_regions, cfg.feature_dim});
      std::vector<int> labels(cfg.n_regions);
      for (int r = 0; r < cfg.n_regions; ++r) {
        const ScenePair& p = pairs[r % pairs.size()];
        labels[r] = p.object;
        for (int d = 0; d < cfg.feature_dim; ++d) {
          double v = world.object_embeddings[p.object][d] +
                     0.3 * world.attribute_embeddings[p.attribute][d] +
                     cfg.noise_std * rng.normal();
          item.image.features.at(r, d) = quantize(v);
        }
      }

      for (int c = 0; c < cfg.captions_per_image; ++c) {
        std::vector<ScenePair> order = pairs;
        rng.shuffle(order);
        Caption cap;
        cap.raw = render_caption(order, static_cast<int>(rng.uniform_int(6)), world);
        item.captions.push_back(std::move(cap));
      }
      ds.items.push_back(std::move(item));
      region_objects.push_back(std::move(labels));
    }
  };

  make_split("train", cfg.n_train, data.train, data.region_objects_train);
  make_split("val", cfg.n_val, data.val, data.region_objects_val);
  make_split("test", cfg.n_test, data.test, data.region_objects_test);
  return data;
}

void encode_dataset(CaptionDataset& ds, const Vocabulary& vocab, int max_len) {
  for (auto& item : ds.items) {
    for (auto& c : item.captions) {
      const std::string raw = c.raw;
      c = encode(vocab, raw, max_len);
    }
  }
}

void save_dataset(const CaptionDataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "features");
  json manifest;
  manifest["split"] = ds.split;
  json items = json::array();
  for (const auto& item : ds.items) {
    const std::string rel = "features/" + item.image.image_id + ".bin";
    json captions = json::array();
    for (const auto& c : item.captions) captions.push_back(c.raw);
    items.push_back({{"image_id", item.image.image_id},
                     {"R", item.image.regions()},
                     {"D", item.image.dim()},
                     {"features", rel},
                     {"captions", std::move(captions)}});
    std::ofstream bf(fs::path(dir) / rel, std::ios::binary);
    if (!bf) {
      throw IoError(IoError::Kind::WriteFailed,
                    "cannot write feature file for " + item.image.image_id);
    }
    for (std::size_t i = 0; i < item.image.features.numel(); ++i) {
      const float v = static_cast<float>(item.image.features[i]);
      bf.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  manifest["items"] = std::move(items);
  std::ofstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw IoError(IoError::Kind::WriteFailed, "cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

CaptionDataset load_dataset(const std::string& manifest_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw IoError(IoError::Kind::MissingFile, "missing manifest " + manifest_path);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed manifest: " + std::string(e.what()));
  }

  CaptionDataset ds;
  const fs::path base = fs::path(manifest_path).parent_path();
  std::set<std::string> seen_ids;
  try {
    ds.split = manifest.value("split", "train");
    for (const auto& entry : manifest.at("items")) {
      DatasetItem item;
      item.image.image_id = entry.at("image_id").get<std::string>();
      if (!seen_ids.insert(item.image.image_id).second) {
        throw IoError(IoError::Kind::MalformedManifest,
                      "duplicate image_id in manifest: " + item.image.image_id);
      }
      const int r = entry.at("R").get<int>();
      const int d = entry.at("D").get<int>();
      if (r < 1 || d < 1) {
        throw IoError(IoError::Kind::MalformedManifest,
                      "manifest declares non-positive R or D for " + item.image.image_id);
      }
      const fs::path feat = base / entry.at("features").get<std::string>();
      std::ifstream bf(feat, std::ios::binary);
      if (!bf) {
        throw IoError(IoError::Kind::MissingFile,
                      "missing feature file " + feat.string());
      }
      std::vector<char> bytes((std::istreambuf_iterator<char>(bf)),
                              std::istreambuf_iterator<char>());
      const std::size_t expected = static_cast<std::size_t>(r) * d * 4;
      if (bytes.size() != expected) {
        throw IoError(IoError::Kind::ShapeMismatch,
                      "feature payload for " + item.image.image_id + " has " +
                          std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected));
      }
      item.image.features = Tensor({r, d});
      for (std::size_t i = 0; i < item.image.features.numel(); ++i) {
        float v;
        std::memcpy(&v, bytes.data() + 4 * i, 4);
        item.image.features[i] = static_cast<double>(v);
      }
      if (!item.image.features.all_finite()) {
        throw IoError(IoError::Kind::ShapeMismatch,
                      "non-finite feature values for " + item.image.image_id);
      }
      for (const auto& c : entry.at("captions")) {
        Caption cap;
        cap.raw = c.get<std::string>();
        item.captions.push_back(std::move(cap));
      }
      if (item.captions.empty()) {
        throw IoError(IoError::Kind::MalformedManifest,
                      "item " + item.image.image_id + " has no captions");
      }
      ds.items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed manifest: " + std::string(e.what()));
  }
  return ds;
}

}  // namespace topiccap::corpus
