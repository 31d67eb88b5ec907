// Copyright 2026 The graft Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "graft/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "graft/error.hpp"

namespace graft {

static_assert(std::endian::native == std::endian::little, "tensor files assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'R', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t crc(const void* data, std::size_t n, std::uint32_t seed = 0) {
  return static_cast<std::uint32_t>(
      crc32(seed, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  const char* take(std::size_t n) {
    if (pos_ + n > data_.size()) throw ChecksumError("tensor file truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::string str(std::size_t n) { return std::string(take(n), n); }
  std::size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string group_file(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEmbedding: return "embedding.bin";
    case ParamGroup::kBody: return "body.bin";
    case ParamGroup::kLora: return "lora.bin";
  }
  return {};
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

TensorFile collect_group(const Checkpoint& ckpt, ParamGroup group) {
  TensorFile file;
  file.meta["group"] = to_string(group);
  if (group == ParamGroup::kEmbedding) file.meta["vocab_fingerprint"] = fingerprint_hex(ckpt.vocab_fingerprint);
  if (group == ParamGroup::kLora) {
    file.meta["rank"] = ckpt.params.lora->rank;
    file.meta["alpha"] = ckpt.params.lora->alpha;
  }
  for_each_tensor(ckpt.params, [&](const std::string& name, ParamGroup g, const Tensor<float>& t) {
    if (g == group) file.tensors.push_back({name, t});
  });
  return file;
}

// Copy tensors of `group` from `file` into `params`, checking names and shapes.
void assign_group(ParameterStore<float>& params, ParamGroup group, const TensorFile& file,
                  const std::string& origin) {
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& r : file.tensors) by_name[r.name] = &r.tensor;
  std::size_t used = 0;
  for_each_tensor(params, [&](const std::string& name, ParamGroup g, Tensor<float>& t) {
    if (g != group) return;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(fmt::format("{}: missing tensor {}", origin, name));
    if (it->second->rows != t.rows || it->second->cols != t.cols) {
      throw IoError(fmt::format("{}: shape mismatch for {}: file {}x{}, model {}x{}", origin, name,
                                it->second->rows, it->second->cols, t.rows, t.cols));
    }
    t = *it->second;
    ++used;
  });
  if (used != file.tensors.size()) throw IoError(origin + ": unexpected extra tensors");
}

void prepare_lora(ParameterStore<float>& params, const nlohmann::json& meta) {
  const std::size_t r = meta.at("rank").get<std::size_t>();
  const std::size_t d = params.config.model_dim;
  LoraParams<float> lp;
  lp.rank = r;
  lp.alpha = meta.at("alpha").get<double>();
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    std::array<LoraPair<float>, 4> arr;
    for (auto& p : arr) p = {Tensor<float>(r, d), Tensor<float>(d, r)};
    lp.layers.push_back(std::move(arr));
  }
  params.lora = std::move(lp);
}

ParameterStore<float> empty_store(const ModelConfig& cfg) {
  cfg.validate();
  ParameterStore<float> p;
  p.config = cfg;
  const std::size_t d = cfg.model_dim;
  p.embedding = Tensor<float>(cfg.vocab_size, d);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerParams<float> L;
    L.attn_norm = Tensor<float>(1, d);
    for (auto& w : L.attn) w = Tensor<float>(d, d);
    L.mlp_norm = Tensor<float>(1, d);
    L.mlp_up = Tensor<float>(cfg.mlp_hidden, d);
    L.mlp_down = Tensor<float>(d, cfg.mlp_hidden);
    p.layers.push_back(std::move(L));
  }
  p.final_norm = Tensor<float>(1, d);
  return p;
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fp) { return fmt::format("{:016x}", fp); }

std::uint64_t fingerprint_from_hex(const std::string& hex) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(hex, &used, 16);
    if (used != hex.size()) throw IoError("bad fingerprint: " + hex);
    return v;
  } catch (const std::logic_error&) {
    throw IoError("bad fingerprint: " + hex);
  }
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  const std::string meta = file.meta.dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& rec : file.tensors) {
    const std::size_t nbytes = rec.tensor.size() * sizeof(float);
    const nlohmann::json header{{"name", rec.name},
                                {"shape", {rec.tensor.rows, rec.tensor.cols}},
                                {"dtype", "f32"},
                                {"crc32", crc(rec.tensor.data.data(), nbytes)}};
    const std::string h = header.dump();
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    out.append(reinterpret_cast<const char*>(rec.tensor.data.data()), nbytes);
  }
  put_u32(out, crc(out.data(), out.size()));
  spill(path, out);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  Reader r(slurp(path));
  if (r.data().size() < 4 || std::memcmp(r.data().data(), kMagic, 4) != 0) {
    throw IoError(path.string() + ": not a tensor file");
  }
  if (r.data().size() < 8) throw ChecksumError(path.string() + ": truncated tensor file");
  {
    std::uint32_t stored;
    const std::size_t body = r.data().size() - 4;
    std::memcpy(&stored, r.data().data() + body, 4);
    if (crc(r.data().data(), body) != stored) {
      throw ChecksumError(path.string() + ": checksum mismatch (truncated or corrupt)");
    }
  }
  r.take(4);
  if (r.u32() != kVersion) throw IoError(path.string() + ": unsupported tensor file version");
  TensorFile file;
  try {
    file.meta = nlohmann::json::parse(r.str(r.u32()));
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto header = nlohmann::json::parse(r.str(r.u32()));
      if (header.at("dtype") != "f32") throw IoError(path.string() + ": unsupported dtype");
      const auto rows = header.at("shape").at(0).get<std::size_t>();
      const auto cols = header.at("shape").at(1).get<std::size_t>();
      TensorRecord rec{header.at("name").get<std::string>(), Tensor<float>(rows, cols)};
      const std::size_t nbytes = rows * cols * sizeof(float);
      std::memcpy(rec.tensor.data.data(), r.take(nbytes), nbytes);
      if (crc(rec.tensor.data.data(), nbytes) != header.at("crc32").get<std::uint32_t>()) {
        throw ChecksumError(fmt::format("{}: checksum mismatch in tensor {}", path.string(), rec.name));
      }
      file.tensors.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("{}: malformed header: {}", path.string(), e.what()));
  }
  if (r.pos() + 4 != r.data().size()) throw IoError(path.string() + ": trailing bytes");
  return file;
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return crc(bytes.data(), bytes.size());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.json");
    cfg << nlohmann::json(ckpt.params.config).dump(2) << '\n';
    if (!cfg) throw IoError("cannot write " + (dir / "config.json").string());
  }
  std::vector<ParamGroup> groups{ParamGroup::kEmbedding, ParamGroup::kBody};
  if (ckpt.params.lora) {
    groups.push_back(ParamGroup::kLora);
  } else {
    std::filesystem::remove(dir / "lora.bin");
  }
  nlohmann::json manifest;
  manifest["vocab_fingerprint"] = fingerprint_hex(ckpt.vocab_fingerprint);
  manifest["lora"] = ckpt.params.lora
                         ? nlohmann::json{{"rank", ckpt.params.lora->rank}, {"alpha", ckpt.params.lora->alpha}}
                         : nlohmann::json(nullptr);
  manifest["files"]["config.json"] = file_crc32(dir / "config.json");
  for (auto g : groups) {
    const auto name = group_file(g);
    write_tensor_file(dir / name, collect_group(ckpt, g));
    manifest["files"][name] = file_crc32(dir / name);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  try {
    for (const auto& [name, expected] : manifest.at("files").items()) {
      if (file_crc32(dir / name) != expected.get<std::uint32_t>()) {
        throw ChecksumError(fmt::format("{}: CRC does not match manifest", (dir / name).string()));
      }
    }
    Checkpoint ckpt;
    ckpt.params = empty_store(read_json(dir / "config.json").get<ModelConfig>());
    load_group(dir, ParamGroup::kEmbedding, ckpt);
    load_group(dir, ParamGroup::kBody, ckpt);
    if (!manifest.at("lora").is_null()) load_group(dir, ParamGroup::kLora, ckpt);
    if (ckpt.vocab_fingerprint != fingerprint_from_hex(manifest.at("vocab_fingerprint"))) {
      throw IoError(dir.string() + ": embedding fingerprint disagrees with manifest");
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("{}: malformed checkpoint: {}", dir.string(), e.what()));
  }
}

void load_group(const std::filesystem::path& dir, ParamGroup group, Checkpoint& into) {
  const auto path = dir / group_file(group);
  const auto file = read_tensor_file(path);
  try {
    if (file.meta.at("group") != to_string(group)) throw IoError(path.string() + ": wrong group");
    if (group == ParamGroup::kLora) {
      prepare_lora(into.params, file.meta);
    }
    assign_group(into.params, group, file, path.string());
    if (group == ParamGroup::kEmbedding) {
      into.vocab_fingerprint = fingerprint_from_hex(file.meta.at("vocab_fingerprint"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("{}: malformed metadata: {}", path.string(), e.what()));
  }
}

void save_embedding(const EmbeddingMatrix& emb, const std::filesystem::path& path) {
  TensorFile file;
  file.meta["group"] = to_string(ParamGroup::kEmbedding);
  file.meta["vocab_fingerprint"] = fingerprint_hex(emb.vocab_fingerprint);
  file.tensors.push_back({"embedding", emb.table});
  write_tensor_file(path, file);
}

EmbeddingMatrix load_embedding(const std::filesystem::path& path) {
  const auto file = read_tensor_file(path);
  if (file.tensors.size() != 1 || file.tensors[0].name != "embedding") {
    throw IoError(path.string() + ": expected a single embedding tensor");
  }
  try {
    return {file.tensors[0].tensor, fingerprint_from_hex(file.meta.at("vocab_fingerprint"))};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(fmt::format("{}: malformed metadata: {}", path.string(), e.what()));
  }
}

}  // namespace graft
