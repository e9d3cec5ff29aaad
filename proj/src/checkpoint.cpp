// SPDX-License-Identifier: Apache-2.0
#include "mask3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "mask3d/error.hpp"

namespace mask3d {

using nlohmann::json;

json to_json(const ViTConfig& c) {
  return {{"token_dim", c.token_dim},           {"n_heads", c.n_heads},
          {"n_layers_color", c.n_layers_color}, {"n_layers_depth", c.n_layers_depth},
          {"n_layers_decoder", c.n_layers_decoder}, {"mlp_ratio", c.mlp_ratio},
          {"patch", c.patch}};
}

json to_json(const ModelConfig& c) {
  return {{"image_h", c.image_h}, {"image_w", c.image_w}, {"vit", to_json(c.vit)}, {"rgb_head", c.rgb_head}};
}

json to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"decay", c.decay},
          {"decay_every", c.decay_every},
          {"epochs", c.epochs},
          {"micro_batch", c.micro_batch},
          {"accum", c.accum},
          {"p_c", c.p_c},
          {"p_d", c.p_d},
          {"lambda_rgb", c.lambda_rgb},
          {"momentum", c.momentum},
          {"masked_only", c.masked_only},
          {"seed", c.seed},
          {"threads", c.threads},
          {"val_every", c.val_every}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  j.at("image_h").get_to(c.image_h);
  j.at("image_w").get_to(c.image_w);
  j.at("rgb_head").get_to(c.rgb_head);
  const auto& v = j.at("vit");
  v.at("token_dim").get_to(c.vit.token_dim);
  v.at("n_heads").get_to(c.vit.n_heads);
  v.at("n_layers_color").get_to(c.vit.n_layers_color);
  v.at("n_layers_depth").get_to(c.vit.n_layers_depth);
  v.at("n_layers_decoder").get_to(c.vit.n_layers_decoder);
  v.at("mlp_ratio").get_to(c.vit.mlp_ratio);
  v.at("patch").get_to(c.vit.patch);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  j.at("lr0").get_to(c.lr0);
  j.at("decay").get_to(c.decay);
  j.at("decay_every").get_to(c.decay_every);
  j.at("epochs").get_to(c.epochs);
  j.at("micro_batch").get_to(c.micro_batch);
  j.at("accum").get_to(c.accum);
  j.at("p_c").get_to(c.p_c);
  j.at("p_d").get_to(c.p_d);
  j.at("lambda_rgb").get_to(c.lambda_rgb);
  j.at("momentum").get_to(c.momentum);
  j.at("masked_only").get_to(c.masked_only);
  j.at("seed").get_to(c.seed);
  j.at("threads").get_to(c.threads);
  j.at("val_every").get_to(c.val_every);
  return c;
}

namespace {

constexpr char kMagic[4] = {'M', '3', 'D', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void read(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError(source_ + ": truncated checkpoint");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Mask3dModel<float>& model, const TrainConfig* train, const RunMetrics& metrics,
                     const std::filesystem::path& path) {
  json meta;
  meta["model"] = to_json(model.config);
  if (train) meta["train"] = to_json(*train);
  meta["summary"] = {{"steps", metrics.steps.size()},
                     {"final_loss", metrics.steps.empty() ? json(nullptr) : json(metrics.steps.back().loss)}};
  const std::string blob = meta.dump();

  auto tensors = model.named_parameters();
  tensors.emplace_back("mask_token", model.mask_token);

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out += blob;
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = t.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader in(std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()), path.string());

  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(path.string() + ": not a checkpoint (bad magic)");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  try {
    ck.meta = json::parse(in.str(in.u32()));
    ck.model = init_model<float>(model_config_from_json(ck.meta.at("model")), 0);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": bad config blob: " + e.what());
  }

  std::map<std::string, Tensor<float>> slots;
  ck.model.for_each_parameter([&](const std::string& name, Tensor<float>& t) { slots.emplace(name, t); });
  slots.emplace("mask_token", ck.model.mask_token);

  const auto count = in.u32();
  if (count != slots.size()) {
    throw CheckpointError(path.string() + ": holds " + std::to_string(count) + " tensors, model needs " +
                          std::to_string(slots.size()));
  }
  std::set<std::string> seen;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name = in.str(in.u32());
    if (!seen.insert(name).second) throw CheckpointError(path.string() + ": duplicate tensor '" + name + "'");
    const auto rank = in.u32();
    Shape shape(rank);
    for (auto& d : shape) d = in.u32();
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError(path.string() + ": unexpected tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw CheckpointError(path.string() + ": tensor '" + name + "' has shape " + shape_str(shape) +
                            ", expected " + shape_str(it->second.shape()));
    }
    auto dst = it->second.mutable_data();
    in.read(dst.data(), dst.size() * sizeof(float));
  }
  if (!in.at_end()) throw CheckpointError(path.string() + ": trailing bytes after last tensor");
  return ck;
}

}  // namespace mask3d
