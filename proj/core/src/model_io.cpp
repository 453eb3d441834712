#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlab/model.hpp"

// The weight file format stores raw little-endian IEEE-754 f32; we read and
// write memory directly, so only little-endian hosts are supported.
static_assert(std::endian::native == std::endian::little,
              "weight file I/O assumes a little-endian host");

namespace xlab {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct TensorRef {
  std::string name;
  std::vector<int> shape;
  const std::vector<float>* data;
};

std::vector<TensorRef> tensor_list(const Model& m) {
  const ModelSpec& s = m.spec;
  std::vector<TensorRef> out;
  out.push_back({"embed", {s.vocab, s.width}, &m.embed.data});
  out.push_back({"pos", {s.maxlen, s.width}, &m.pos.data});
  for (int i = 0; i < s.n_layers; ++i) {
    const Block& b = m.blocks[i];
    std::string prefix = "block." + std::to_string(i) + ".";
    out.push_back({prefix + "attn.q", {s.width, s.width}, &b.wq.data});
    out.push_back({prefix + "attn.k", {s.width, s.width}, &b.wk.data});
    out.push_back({prefix + "attn.v", {s.width, s.width}, &b.wv.data});
    out.push_back({prefix + "attn.o", {s.width, s.width}, &b.wo.data});
    out.push_back({prefix + "mlp.w1", {s.width, s.mlp_hidden}, &b.w1.data});
    out.push_back({prefix + "mlp.w2", {s.mlp_hidden, s.width}, &b.w2.data});
    out.push_back({prefix + "norm1", {s.width}, &b.norm1});
    out.push_back({prefix + "norm2", {s.width}, &b.norm2});
  }
  out.push_back({"final_norm", {s.width}, &m.final_norm});
  out.push_back({"unembed", {s.width, s.vocab}, &m.unembed.data});
  return out;
}

size_t shape_count(const std::vector<int>& shape) {
  size_t n = 1;
  for (int v : shape) n *= static_cast<size_t>(v);
  return n;
}

std::string norm_name(NormKind k) { return k == NormKind::rms ? "rms" : "identity"; }

NormKind norm_from_name(const std::string& s) {
  if (s == "rms") return NormKind::rms;
  if (s == "identity") return NormKind::identity;
  raise(Errc::manifest_mismatch, "unknown norm kind '" + s + "'");
}

}  // namespace

void save_model(const Model& m, const std::filesystem::path& dir,
                const std::string& meta_json) {
  validate_spec(m.spec);
  std::filesystem::create_directories(dir);

  ordered_json manifest;
  ordered_json meta;
  meta["tool"] = "xlab";
  meta["version"] = XLAB_VERSION;
  if (!meta_json.empty()) {
    json extra = json::parse(meta_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  }
  manifest["meta"] = meta;
  ordered_json spec;
  spec["width"] = m.spec.width;
  spec["n_layers"] = m.spec.n_layers;
  spec["n_heads"] = m.spec.n_heads;
  spec["head_dim"] = m.spec.head_dim;
  spec["vocab"] = m.spec.vocab;
  spec["maxlen"] = m.spec.maxlen;
  spec["mlp_hidden"] = m.spec.mlp_hidden;
  spec["norm"] = norm_name(m.spec.norm);
  spec["norm_eps"] = m.spec.norm_eps;
  manifest["spec"] = spec;

  ordered_json tensors = ordered_json::array();
  size_t offset = 0;
  auto list = tensor_list(m);
  for (const TensorRef& t : list) {
    ordered_json entry;
    entry["name"] = t.name;
    entry["shape"] = t.shape;
    entry["offset"] = offset;
    tensors.push_back(entry);
    offset += shape_count(t.shape) * sizeof(float);
  }
  manifest["tensors"] = tensors;

  {
    std::ofstream out(dir / "manifest.json");
    require(out.good(), Errc::io_error, "cannot write manifest.json");
    out << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "weights.bin", std::ios::binary);
    require(out.good(), Errc::io_error, "cannot write weights.bin");
    for (const TensorRef& t : list) {
      out.write(reinterpret_cast<const char*>(t.data->data()),
                static_cast<std::streamsize>(t.data->size() * sizeof(float)));
    }
    require(out.good(), Errc::io_error, "short write to weights.bin");
  }
}

Model load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require(in.good(), Errc::missing_artifact,
          "missing " + (dir / "manifest.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    raise(Errc::manifest_mismatch, std::string("manifest parse error: ") + e.what());
  }

  ModelSpec spec;
  try {
    const json& s = manifest.at("spec");
    spec.width = s.at("width").get<int>();
    spec.n_layers = s.at("n_layers").get<int>();
    spec.n_heads = s.at("n_heads").get<int>();
    spec.head_dim = s.at("head_dim").get<int>();
    spec.vocab = s.at("vocab").get<int>();
    spec.maxlen = s.at("maxlen").get<int>();
    spec.mlp_hidden = s.at("mlp_hidden").get<int>();
    spec.norm = norm_from_name(s.at("norm").get<std::string>());
    spec.norm_eps = s.at("norm_eps").get<float>();
  } catch (const json::exception& e) {
    raise(Errc::manifest_mismatch, std::string("manifest spec error: ") + e.what());
  }
  validate_spec(spec);

  Model m;
  m.spec = spec;
  m.embed = Matrix(spec.vocab, spec.width);
  m.pos = Matrix(spec.maxlen, spec.width);
  m.blocks.resize(spec.n_layers);
  for (Block& b : m.blocks) {
    b.wq = Matrix(spec.width, spec.width);
    b.wk = Matrix(spec.width, spec.width);
    b.wv = Matrix(spec.width, spec.width);
    b.wo = Matrix(spec.width, spec.width);
    b.w1 = Matrix(spec.width, spec.mlp_hidden);
    b.w2 = Matrix(spec.mlp_hidden, spec.width);
    b.norm1.resize(spec.width);
    b.norm2.resize(spec.width);
  }
  m.final_norm.resize(spec.width);
  m.unembed = Matrix(spec.width, spec.vocab);

  // Expected tensors, keyed by name; manifest must cover exactly this set.
  std::vector<TensorRef> expect = tensor_list(m);
  auto find_expected = [&](const std::string& name) -> const TensorRef* {
    for (const TensorRef& t : expect) {
      if (t.name == name) return &t;
    }
    return nullptr;
  };

  require(manifest.contains("tensors") && manifest["tensors"].is_array(),
          Errc::manifest_mismatch, "manifest has no tensor list");
  size_t running = 0;
  std::vector<std::string> seen;
  struct LoadPlan { const TensorRef* ref; size_t offset; };
  std::vector<LoadPlan> plan;
  for (const json& entry : manifest["tensors"]) {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<std::vector<int>>();
      offset = entry.at("offset").get<size_t>();
    } catch (const json::exception& e) {
      raise(Errc::manifest_mismatch, std::string("tensor entry error: ") + e.what());
    }
    const TensorRef* ref = find_expected(name);
    require(ref != nullptr, Errc::unknown_tensor_name, "tensor '" + name + "'");
    for (const std::string& s : seen) {
      require(s != name, Errc::manifest_mismatch, "duplicate tensor '" + name + "'");
    }
    seen.push_back(name);
    require(shape == ref->shape, Errc::manifest_mismatch,
            "tensor '" + name + "' shape does not match spec");
    require(offset == running, Errc::manifest_mismatch,
            "tensor '" + name + "' offset is not contiguous");
    plan.push_back({ref, offset});
    running += shape_count(shape) * sizeof(float);
  }
  require(seen.size() == expect.size(), Errc::manifest_mismatch,
          "manifest is missing tensors");

  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  require(blob.good(), Errc::missing_artifact,
          "missing " + (dir / "weights.bin").string());
  blob.seekg(0, std::ios::end);
  size_t blob_size = static_cast<size_t>(blob.tellg());
  require(blob_size >= running, Errc::truncated_blob,
          "weights.bin shorter than manifest offsets require");
  require(blob_size == running, Errc::manifest_mismatch,
          "weights.bin larger than manifest describes");
  blob.seekg(0, std::ios::beg);
  for (const LoadPlan& lp : plan) {
    auto* dst = const_cast<std::vector<float>*>(lp.ref->data);
    blob.read(reinterpret_cast<char*>(dst->data()),
              static_cast<std::streamsize>(dst->size() * sizeof(float)));
    require(blob.good(), Errc::truncated_blob, "short read from weights.bin");
  }
  for (const TensorRef& t : expect) {
    require(all_finite(*t.data), Errc::manifest_mismatch,
            "tensor '" + t.name + "' contains non-finite values");
  }
  return m;
}

}  // namespace xlab
