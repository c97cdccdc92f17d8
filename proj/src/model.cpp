#include "lamnet/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace lamnet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void LamNetConfig::validate() const {
  if (scale < 2 || scale > 4) throw std::invalid_argument("config: scale must be 2, 3 or 4");
  if (channels <= 0 || channels % 2 != 0)
    throw std::invalid_argument("config: channels must be positive and even");
  if (num_blocks <= 0 || pairs_per_block <= 0)
    throw std::invalid_argument("config: num_blocks and pairs_per_block must be positive");
  if (groups <= 0 || (channels / 2) % groups != 0)
    throw std::invalid_argument("config: branch width C/2 must be divisible by groups");
  focal.validate();
  if (csm_hidden < 0) throw std::invalid_argument("config: csm_hidden must be >= 0");
}

LamNetConfig LamNetConfig::base() { return LamNetConfig{}; }

LamNetConfig LamNetConfig::large() {
  LamNetConfig c;
  c.num_blocks = 5;
  c.pairs_per_block = 6;
  return c;
}

namespace {

Tensor make_norm_param(int64_t c, double value, DType dtype) {
  Tensor t = Tensor::full({1, c, 1, 1}, value, dtype, true);
  return t;
}

}  // namespace

Model build(const LamNetConfig& config, uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const int64_t C = config.channels;
  Model m;
  m.config = config;
  m.shallow = make_conv(3, C, 3, 3, 1, config.bias, config.dtype, rng);
  m.blocks.resize(static_cast<size_t>(config.num_blocks));
  for (BlockParams& block : m.blocks) {
    block.pairs.resize(static_cast<size_t>(config.pairs_per_block));
    for (PairParams& pair : block.pairs) {
      pair.ln1_gamma = make_norm_param(C, 1.0, config.dtype);
      pair.ln1_beta = make_norm_param(C, 0.0, config.dtype);
      pair.ulm = UlmParams::init(C, config.groups, config.focal, config.resolved_csm_hidden(),
                                 config.softmax_weights, config.bias, config.dtype, rng);
      pair.ln2_gamma = make_norm_param(C, 1.0, config.dtype);
      pair.ln2_beta = make_norm_param(C, 0.0, config.dtype);
      pair.dgfn = DgfnParams::init(C, config.bias, config.dtype, rng);
    }
  }
  m.trunk = make_conv(C, C, 3, 3, 1, config.bias, config.dtype, rng);
  m.rec = make_conv(C, 3 * config.scale * config.scale, 3, 3, 1, config.bias, config.dtype, rng);
  return m;
}

ForwardTrace Model::forward_trace(const Tensor& i_lr) const {
  if (i_lr.shape().c != 3)
    throw std::invalid_argument("forward: expected 3 input channels, got " +
                                std::to_string(i_lr.shape().c));
  if (i_lr.dtype() != config.dtype)
    throw std::invalid_argument("forward: input dtype does not match model dtype");
  ForwardTrace tr;
  tr.shallow = conv2d(i_lr, shallow);
  Tensor x = tr.shallow;
  for (const BlockParams& block : blocks) {
    Tensor block_in = x;
    for (const PairParams& pair : block.pairs) {
      x = add(x, ulm_forward(layer_norm_channels(x, pair.ln1_gamma, pair.ln1_beta), pair.ulm));
      x = add(x, dgfn_forward(layer_norm_channels(x, pair.ln2_gamma, pair.ln2_beta), pair.dgfn));
    }
    x = add(x, block_in);
  }
  tr.deep = add(conv2d(x, trunk), tr.shallow);
  tr.output = pixel_shuffle(conv2d(tr.deep, rec), config.scale);
  return tr;
}

Tensor Model::forward(const Tensor& i_lr) const { return forward_trace(i_lr).output; }

std::vector<NamedParam> Model::named_params() const {
  std::vector<NamedParam> out;
  append_conv_params(out, "shallow", shallow);
  for (size_t b = 0; b < blocks.size(); ++b)
    for (size_t p = 0; p < blocks[b].pairs.size(); ++p) {
      const PairParams& pair = blocks[b].pairs[p];
      const std::string prefix = "block" + std::to_string(b) + ".pair" + std::to_string(p);
      out.push_back({prefix + ".ln1.gamma", pair.ln1_gamma, ParamKind::norm});
      out.push_back({prefix + ".ln1.beta", pair.ln1_beta, ParamKind::norm});
      for (NamedParam& np : pair.ulm.named_params(prefix + ".ulm")) out.push_back(std::move(np));
      out.push_back({prefix + ".ln2.gamma", pair.ln2_gamma, ParamKind::norm});
      out.push_back({prefix + ".ln2.beta", pair.ln2_beta, ParamKind::norm});
      for (NamedParam& np : pair.dgfn.named_params(prefix + ".dgfn"))
        out.push_back(std::move(np));
    }
  append_conv_params(out, "trunk", trunk);
  append_conv_params(out, "rec", rec);
  return out;
}

int64_t Model::parameter_count(bool include_bias, bool include_norm) const {
  auto params = named_params();
  return count_trainables(params, include_bias, include_norm);
}

// ---- config <-> json ----

std::string config_to_json(const LamNetConfig& c) {
  nlohmann::json j;
  j["scale"] = c.scale;
  j["channels"] = c.channels;
  j["num_blocks"] = c.num_blocks;
  j["pairs_per_block"] = c.pairs_per_block;
  j["groups"] = c.groups;
  j["strides"] = c.focal.strides;
  j["steps"] = c.focal.steps;
  j["csm_hidden"] = c.csm_hidden;
  j["softmax_weights"] = c.softmax_weights;
  j["bias"] = c.bias;
  j["dtype"] = dtype_name(c.dtype);
  return j.dump();
}

LamNetConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  LamNetConfig c;
  c.scale = j.at("scale").get<int64_t>();
  c.channels = j.at("channels").get<int64_t>();
  c.num_blocks = j.at("num_blocks").get<int64_t>();
  c.pairs_per_block = j.at("pairs_per_block").get<int64_t>();
  c.groups = j.at("groups").get<int64_t>();
  c.focal.strides = j.at("strides").get<std::vector<int64_t>>();
  c.focal.steps = j.at("steps").get<std::vector<int64_t>>();
  c.csm_hidden = j.at("csm_hidden").get<int64_t>();
  c.softmax_weights = j.at("softmax_weights").get<bool>();
  c.bias = j.at("bias").get<bool>();
  c.dtype = dtype_from_name(j.at("dtype").get<std::string>());
  return c;
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[8] = {'L', 'M', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw checkpoint_error(std::string("checkpoint truncated while reading ") + what +
                           " (needed " + std::to_string(sizeof(T)) + " bytes)");
  return v;
}

void write_payload(std::ostream& os, const Tensor& t) {
  if (t.dtype() == DType::f32) {
    std::vector<float> buf(t.values().begin(), t.values().end());
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
}

void read_payload(std::istream& is, Tensor& t, const std::string& name) {
  const size_t n = t.values().size();
  const size_t width = t.dtype() == DType::f32 ? sizeof(float) : sizeof(double);
  std::vector<char> buf(n * width);
  if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size())))
    throw checkpoint_error("checkpoint truncated in payload of '" + name + "' (needed " +
                           std::to_string(buf.size()) + " bytes, got " +
                           std::to_string(is.gcount()) + ")");
  if (t.dtype() == DType::f32) {
    const float* f = reinterpret_cast<const float*>(buf.data());
    for (size_t i = 0; i < n; ++i) t.values()[i] = static_cast<double>(f[i]);
  } else {
    std::memcpy(t.values().data(), buf.data(), buf.size());
  }
}

struct LoadedTensor {
  DType dtype;
  Shape4 shape;
  std::vector<char> payload;
};

std::pair<LamNetConfig, std::vector<std::pair<std::string, LoadedTensor>>> read_container(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw checkpoint_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw checkpoint_error("'" + path + "' is not a checkpoint (bad magic)");
  const uint32_t version = read_pod<uint32_t>(is, "version");
  if (version != kVersion)
    throw checkpoint_error("unsupported checkpoint version " + std::to_string(version));
  const uint32_t cfg_len = read_pod<uint32_t>(is, "config length");
  std::string cfg_text(cfg_len, '\0');
  if (!is.read(cfg_text.data(), cfg_len))
    throw checkpoint_error("checkpoint truncated in config record");
  LamNetConfig config;
  try {
    config = config_from_json(cfg_text);
  } catch (const std::exception& e) {
    throw checkpoint_error(std::string("bad checkpoint config record: ") + e.what());
  }
  const uint64_t count = read_pod<uint64_t>(is, "tensor count");
  std::vector<std::pair<std::string, LoadedTensor>> tensors;
  tensors.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(is, "tensor name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw checkpoint_error("checkpoint truncated in tensor name");
    LoadedTensor lt;
    const uint8_t dt = read_pod<uint8_t>(is, "dtype");
    if (dt > 1) throw checkpoint_error("bad dtype byte in tensor '" + name + "'");
    lt.dtype = static_cast<DType>(dt);
    lt.shape.n = static_cast<int64_t>(read_pod<uint64_t>(is, "shape"));
    lt.shape.c = static_cast<int64_t>(read_pod<uint64_t>(is, "shape"));
    lt.shape.h = static_cast<int64_t>(read_pod<uint64_t>(is, "shape"));
    lt.shape.w = static_cast<int64_t>(read_pod<uint64_t>(is, "shape"));
    const uint64_t bytes = read_pod<uint64_t>(is, "payload size");
    const size_t width = lt.dtype == DType::f32 ? sizeof(float) : sizeof(double);
    if (bytes != static_cast<uint64_t>(lt.shape.numel()) * width)
      throw checkpoint_error("payload size mismatch in tensor '" + name + "'");
    lt.payload.resize(bytes);
    if (!is.read(lt.payload.data(), static_cast<std::streamsize>(bytes)))
      throw checkpoint_error("checkpoint truncated in payload of '" + name + "' (needed " +
                             std::to_string(bytes) + " bytes, got " +
                             std::to_string(is.gcount()) + ")");
    tensors.emplace_back(std::move(name), std::move(lt));
  }
  return {config, std::move(tensors)};
}

void fill_from_loaded(Tensor& dst, const LoadedTensor& src, const std::string& name) {
  if (!(dst.shape() == src.shape))
    throw checkpoint_error("shape mismatch for '" + name + "': model has " +
                           to_string(dst.shape()) + ", checkpoint has " + to_string(src.shape));
  if (dst.dtype() != src.dtype)
    throw checkpoint_error("dtype mismatch for '" + name + "'");
  const size_t n = dst.values().size();
  if (src.dtype == DType::f32) {
    const float* f = reinterpret_cast<const float*>(src.payload.data());
    for (size_t i = 0; i < n; ++i) dst.values()[i] = static_cast<double>(f[i]);
  } else {
    std::memcpy(dst.values().data(), src.payload.data(), src.payload.size());
  }
}

}  // namespace

void save(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw checkpoint_error("cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  write_pod(os, kVersion);
  const std::string cfg = config_to_json(model.config);
  write_pod(os, static_cast<uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto params = model.named_params();
  write_pod(os, static_cast<uint64_t>(params.size()));
  for (const NamedParam& p : params) {
    write_pod(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod(os, static_cast<uint8_t>(p.tensor.dtype()));
    const Shape4 s = p.tensor.shape();
    write_pod(os, static_cast<uint64_t>(s.n));
    write_pod(os, static_cast<uint64_t>(s.c));
    write_pod(os, static_cast<uint64_t>(s.h));
    write_pod(os, static_cast<uint64_t>(s.w));
    const size_t width = p.tensor.dtype() == DType::f32 ? sizeof(float) : sizeof(double);
    write_pod(os, static_cast<uint64_t>(p.tensor.values().size() * width));
    write_payload(os, p.tensor);
  }
  if (!os) throw checkpoint_error("write failed for '" + path + "'");
}

Model load(const std::string& path) {
  auto [config, tensors] = read_container(path);
  Model m = build(config, 0);
  auto params = m.named_params();
  if (params.size() != tensors.size())
    throw checkpoint_error("checkpoint has " + std::to_string(tensors.size()) +
                           " tensors, model built from its config needs " +
                           std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != tensors[i].first)
      throw checkpoint_error("tensor order mismatch at index " + std::to_string(i) +
                             ": expected '" + params[i].name + "', found '" + tensors[i].first +
                             "'");
    fill_from_loaded(params[i].tensor, tensors[i].second, params[i].name);
  }
  return m;
}

void load_transfer(Model& model, const std::string& path) {
  auto [config, tensors] = read_container(path);
  LamNetConfig donor = config;
  donor.scale = model.config.scale;
  if (!(donor == model.config))
    throw checkpoint_error(
        "transfer requires matching configs apart from scale; checkpoint config differs");
  auto params = model.named_params();
  size_t idx = 0;
  for (auto& [name, lt] : tensors) {
    if (name.rfind("rec.", 0) == 0) continue;  // reconstruction head stays freshly initialized
    while (idx < params.size() && params[idx].name != name) ++idx;
    if (idx == params.size())
      throw checkpoint_error("checkpoint tensor '" + name + "' has no slot in the model");
    fill_from_loaded(params[idx].tensor, lt, name);
  }
}

}  // namespace lamnet
