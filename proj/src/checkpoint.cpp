#include "topiccap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "topiccap/errors.hpp"

namespace topiccap::nn {

using nlohmann::json;

namespace {

// Little-endian float32 payload helpers. The build targets little-endian
// hosts; the fields are written byte-by-byte to keep the format pinned.
void append_f32(std::vector<unsigned char>& out, float v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

float read_f32(const unsigned char* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& path_prefix,
                     const CheckpointMeta& meta) {
  json manifest;
  manifest["dtype"] = "float32";
  manifest["step"] = meta.step;
  if (!meta.extra.empty()) manifest["extra"] = meta.extra;
  json tensors = json::array();
  std::vector<unsigned char> blob;
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      append_f32(blob, static_cast<float>(p.value[i]));
    }
  }
  manifest["tensors"] = std::move(tensors);

  std::ofstream jf(path_prefix + ".json");
  if (!jf) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path_prefix + ".json");
  jf << manifest.dump(2) << "\n";
  std::ofstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw IoError(IoError::Kind::WriteFailed, "cannot write " + path_prefix + ".bin");
  bf.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size()));
}

CheckpointMeta load_checkpoint(ParameterSet& params, const std::string& path_prefix) {
  std::ifstream jf(path_prefix + ".json");
  if (!jf) throw IoError(IoError::Kind::MissingFile, "missing checkpoint manifest " + path_prefix + ".json");
  json manifest;
  try {
    jf >> manifest;
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed checkpoint manifest: " + std::string(e.what()));
  }

  std::ifstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw IoError(IoError::Kind::MissingFile, "missing checkpoint blob " + path_prefix + ".bin");
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)),
                                  std::istreambuf_iterator<char>());

  CheckpointMeta meta;
  try {
    meta.step = manifest.value("step", std::int64_t{0});
    if (manifest.contains("extra")) {
      meta.extra = manifest["extra"].get<std::map<std::string, std::string>>();
    }
    std::size_t off = 0;
    for (const auto& entry : manifest.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
      Tensor t(shape);
      if (off + 4 * t.numel() > blob.size()) {
        throw IoError(IoError::Kind::ShapeMismatch,
                      "checkpoint blob shorter than manifest for tensor " + name);
      }
      for (std::size_t i = 0; i < t.numel(); ++i, off += 4) {
        t[i] = static_cast<double>(read_f32(blob.data() + off));
      }
      if (params.contains(name)) {
        Param& p = params.at(name);
        if (!(p.value.shape() == shape)) {
          throw IoError(IoError::Kind::ShapeMismatch,
                        "checkpoint shape mismatch for tensor " + name);
        }
        p.value = std::move(t);
      } else {
        params.add(name, std::move(t));
      }
    }
    if (off != blob.size()) {
      throw IoError(IoError::Kind::ShapeMismatch,
                    "checkpoint blob longer than manifest declares");
    }
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedManifest,
                  "malformed checkpoint manifest: " + std::string(e.what()));
  }
  return meta;
}

}  // namespace topiccap::nn
