#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nlohmann/json.hpp"
#include "spectraldiff/core.hpp"
#include "spectraldiff/nn/config.hpp"
#include "spectraldiff/nn/ops.hpp"
#include "spectraldiff/nn/tensor.hpp"
#include "spectraldiff/rng.hpp"

namespace spectraldiff {

struct ParamInfo {
  std::string name;
  std::vector<int> shape;

  size_t numel() const {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
  }
};

// k^2 c_in c_out weights plus c_out biases.
inline size_t conv_param_count(int c_in, int c_out, int k) {
  return size_t(k) * k * c_in * c_out + size_t(c_out);
}

// Squeeze (C -> C/r) and excite (C/r -> C) pointwise maps with biases.
inline size_t product_layer_param_count(int c, int r_c) {
  if (c % r_c != 0) throw std::invalid_argument("product_layer_param_count: r_c must divide C");
  const size_t b = size_t(c) / r_c;
  return 2 * size_t(c) * b + b + size_t(c);
}

namespace detail {

// Enumerates (name, shape) pairs in the same order the graph builder consumes
// them; checkpoints serialize tensors in this order.
struct PlanBuilder {
  std::vector<ParamInfo>* plan;
  const DenoiserConfig* cfg;

  void tensor(const std::string& name, std::vector<int> shape) {
    plan->push_back({name, std::move(shape)});
  }
  void conv(const std::string& prefix, int c_in, int c_out, int k) {
    tensor(prefix + ".w", {c_out, c_in, k, k});
    tensor(prefix + ".b", {c_out});
  }
  void pointwise(const std::string& prefix, int c_in, int c_out) { conv(prefix, c_in, c_out, 1); }
  void norm(const std::string& prefix, int c) {
    tensor(prefix + ".g", {c});
    tensor(prefix + ".b", {c});
  }
  void lin(const std::string& prefix, int c_in, int c_out) {
    tensor(prefix + ".w", {c_out, c_in});
    tensor(prefix + ".b", {c_out});
  }
  void product(const std::string& prefix, int c) {
    pointwise(prefix + ".squeeze", c, c / cfg->r_c);
    pointwise(prefix + ".excite", c / cfg->r_c, c);
  }
  void block(const std::string& name, int c) {
    norm(name + ".norm1", c);
    if (cfg->backbone == Backbone::Conv) {
      conv(name + ".conv1", c, c, 3);
      lin(name + ".emb", cfg->step_embed_dim, c);
      norm(name + ".norm2", c);
      conv(name + ".conv2", c, c, 3);
    } else {
      product(name + ".product1", c);
      lin(name + ".emb", cfg->step_embed_dim, c);
      product(name + ".product2", c);
    }
  }
  void attention(const std::string& name, int c) {
    norm(name + ".norm", c);
    pointwise(name + ".q", c, c);
    pointwise(name + ".k", c, c);
    pointwise(name + ".v", c, c);
    pointwise(name + ".out", c, c);
  }
};

}  // namespace detail

inline std::vector<ParamInfo> param_plan(const DenoiserConfig& cfg) {
  cfg.validate();
  const int L = cfg.depth();
  const auto ch = cfg.channels();
  const auto up = cfg.up_channels();
  const int mid = ch[L - 1];

  std::vector<ParamInfo> plan;
  detail::PlanBuilder p{&plan, &cfg};

  p.conv("stem", cfg.in_channels + cfg.cond_channels, ch[0],
         cfg.backbone == Backbone::Conv ? 3 : 1);
  p.lin("emb.mlp1", cfg.step_embed_dim, cfg.step_embed_dim);
  p.lin("emb.mlp2", cfg.step_embed_dim, cfg.step_embed_dim);
  if (cfg.attn_middle) {
    p.pointwise("ctx.embed1", cfg.cond_channels, mid);
    p.pointwise("ctx.embed2", mid, mid);
  }
  for (int i = 0; i < L; ++i) {
    p.block("down" + std::to_string(i), ch[i]);
    if (i == L - 1 && cfg.attn_last_down)
      p.attention("down" + std::to_string(i) + ".attn", ch[i]);
    if (i < L - 1) p.pointwise("down" + std::to_string(i) + ".to", ch[i], ch[i + 1]);
  }
  p.block("middle", mid);
  if (cfg.attn_middle) {
    p.attention("middle.self_attn", mid);
    p.attention("middle.cross_attn", mid);
  }
  for (int i = L - 1; i >= 0; --i) {
    const int w_in = (i == L - 1) ? ch[L - 1] : up[i + 1];
    p.pointwise("up" + std::to_string(i) + ".fuse", w_in + ch[i], up[i]);
    p.block("up" + std::to_string(i), up[i]);
    if (i == L - 1 && cfg.attn_first_up)
      p.attention("up" + std::to_string(i) + ".attn", up[i]);
    if (i > 0) p.pointwise("up" + std::to_string(i) + ".smooth", up[i], up[i]);
  }
  p.norm("head.norm", up[0]);
  p.conv("head", up[0], cfg.in_channels, cfg.backbone == Backbone::Conv ? 3 : 1);

  return plan;
}

inline size_t count_params(const DenoiserConfig& cfg) {
  size_t n = 0;
  for (const auto& p : param_plan(cfg)) n += p.numel();
  return n;
}

template <typename T>
struct DenoiserModel {
  DenoiserConfig config;
  std::vector<ParamInfo> plan;
  std::vector<Tensor<T>> params;

  size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("no such parameter: " + name);
    return it->second;
  }
  Tensor<T>& param(const std::string& name) { return params[index_of(name)]; }
  const Tensor<T>& param(const std::string& name) const { return params[index_of(name)]; }

  size_t param_count() const {
    size_t n = 0;
    for (const auto& t : params) n += t.size();
    return n;
  }

  void rebuild_index() {
    index_.clear();
    for (size_t i = 0; i < plan.size(); ++i) index_[plan[i].name] = i;
  }

 private:
  std::unordered_map<std::string, size_t> index_;
};

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Residual branches and the head start at zero so a fresh model predicts the
// zero field; training moves it away from the identity gradually.
inline bool zero_init(const std::string& name) {
  return name == "head.w" || name == "head.b" || ends_with(name, ".conv2.w") ||
         ends_with(name, ".conv2.b") || ends_with(name, ".product2.excite.w") ||
         ends_with(name, ".product2.excite.b") || ends_with(name, ".out.w") ||
         ends_with(name, ".out.b");
}

}  // namespace detail

template <typename T>
DenoiserModel<T> init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
  DenoiserModel<T> m;
  m.config = cfg;
  m.plan = param_plan(cfg);
  m.params.reserve(m.plan.size());

  Rng root(seed);
  for (size_t i = 0; i < m.plan.size(); ++i) {
    const ParamInfo& info = m.plan[i];
    Tensor<T> t(info.shape);
    if (detail::ends_with(info.name, ".g")) {
      for (T& v : t.data) v = T(1);
    } else if (detail::ends_with(info.name, ".w") && !detail::zero_init(info.name)) {
      // He-scaled normal: fan-in is c_in * k * k for kernels, c_in for linears.
      size_t fan_in = 1;
      for (size_t d = 1; d < info.shape.size(); ++d) fan_in *= size_t(info.shape[d]);
      const double sd = std::sqrt(2.0 / double(fan_in));
      Rng r = root.derive(i);
      for (T& v : t.data) v = T(sd * r.normal());
    }
    // biases, norm shifts and zero-init tensors stay at 0
    m.params.push_back(std::move(t));
  }
  m.rebuild_index();
  return m;
}

// Fills every tensor (including the zero-init ones) with small normals; used
// to exercise a model whose output actually depends on all of its inputs.
template <typename T>
void randomize_denoiser(DenoiserModel<T>& m, uint64_t seed, double scale = 0.1) {
  Rng root(seed);
  for (size_t i = 0; i < m.params.size(); ++i) {
    Rng r = root.derive(i);
    for (T& v : m.params[i].data) v = T(scale * r.normal());
  }
}

// Standalone full-product layer: h = x ⊙ (W2·act(W1·x + b1) + b2) per pixel,
// W1: C -> C/r, W2: C/r -> C, both pointwise.
template <typename T>
struct ProductLayerParams {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
Tensor<T> product_layer_forward(const Tensor<T>& x, const ProductLayerParams<T>& p) {
  if (x.shape.size() != 3) throw std::invalid_argument("product_layer_forward: want (C,H,W)");
  const int c = x.shape[0];
  if (p.w1.shape.size() != 4 || p.w1.shape[1] != c || p.w1.shape[2] != 1 ||
      p.w2.shape.size() != 4 || p.w2.shape[0] != c || p.w2.shape[1] != p.w1.shape[0])
    throw std::invalid_argument("product_layer_forward: bottleneck shapes inconsistent with C");
  Tape<T> t;
  t.grad_enabled = false;
  VarId xx = t.leaf(x);
  VarId g = t.conv2d(xx, t.leaf(p.w1), t.leaf(p.b1));
  g = t.silu(g);
  g = t.conv2d(g, t.leaf(p.w2), t.leaf(p.b2));
  return t.value(t.mul(xx, g));
}

// Transformer-style sinusoidal features of the step index.
inline std::vector<double> step_embedding(int d, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("step_embedding: dim must be even >= 2");
  const int half = dim / 2;
  std::vector<double> e(static_cast<size_t>(dim), 0.0);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
    e[size_t(i)] = std::sin(double(d) * freq);
    e[size_t(half + i)] = std::cos(double(d) * freq);
  }
  return e;
}

template <typename T>
struct DenoiserGraph {
  VarId out = -1;
  std::vector<VarId> params;  // leaf ids aligned with model.plan
};

namespace detail {

template <typename T>
struct GraphCtx {
  Tape<T>* t;
  const DenoiserModel<T>* m;
  const std::vector<VarId>* pid;

  VarId p(const std::string& name) const { return (*pid)[m->index_of(name)]; }

  VarId conv(const std::string& prefix, VarId x) const {
    return t->conv2d(x, p(prefix + ".w"), p(prefix + ".b"));
  }
  VarId lin(const std::string& prefix, VarId x) const {
    return t->linear(x, p(prefix + ".w"), p(prefix + ".b"));
  }
  VarId norm(const std::string& prefix, VarId x) const {
    const int c = t->value(x).shape[0];
    return t->group_norm(x, p(prefix + ".g"), p(prefix + ".b"), norm_groups(c));
  }
  VarId product(const std::string& prefix, VarId x) const {
    VarId g = conv(prefix + ".squeeze", x);
    g = t->silu(g);
    g = conv(prefix + ".excite", g);
    return t->mul(x, g);
  }
  VarId block(const std::string& name, VarId x, VarId emb) const {
    VarId h = norm(name + ".norm1", x);
    if (m->config.backbone == Backbone::Conv) {
      h = t->silu(h);
      h = conv(name + ".conv1", h);
      h = t->add_channel_bias(h, lin(name + ".emb", emb));
      h = norm(name + ".norm2", h);
      h = t->silu(h);
      h = conv(name + ".conv2", h);
    } else {
      h = product(name + ".product1", h);
      h = t->add_channel_bias(h, lin(name + ".emb", emb));
      h = t->silu(h);
      h = product(name + ".product2", h);
    }
    return t->add(x, h);
  }
  VarId attention(const std::string& name, VarId x, VarId kv_src = -1) const {
    VarId n = norm(name + ".norm", x);
    VarId src = kv_src < 0 ? n : kv_src;
    VarId q = conv(name + ".q", n);
    VarId k = conv(name + ".k", src);
    VarId v = conv(name + ".v", src);
    VarId o = conv(name + ".out", t->attend(q, k, v));
    return t->add(x, o);
  }
};

}  // namespace detail

// Builds the full denoiser as a tape graph. Parameters enter as leaves (one
// per plan entry, in plan order) so callers can read their gradients back
// after Tape::backward.
template <typename T>
DenoiserGraph<T> build_denoiser_graph(Tape<T>& t, const DenoiserModel<T>& m, const Tensor<T>& x_in,
                                      int d, const Tensor<T>& cond) {
  const DenoiserConfig& cfg = m.config;
  if (m.params.size() != m.plan.size()) throw std::invalid_argument("model has no parameters");
  if (x_in.shape.size() != 3 || x_in.shape[0] != cfg.in_channels)
    throw std::invalid_argument("denoiser: input must be (in_channels, H, W)");
  if (cond.shape.size() != 3 || cond.shape[0] != cfg.cond_channels ||
      cond.shape[1] != x_in.shape[1] || cond.shape[2] != x_in.shape[2])
    throw std::invalid_argument("denoiser: conditioning must be (cond_channels, H, W)");
  if (d < 1) throw std::invalid_argument("denoiser: step index must be >= 1");
  const int L = cfg.depth();
  const int H = x_in.shape[1], W = x_in.shape[2];
  if ((H >> (L - 1)) << (L - 1) != H || (W >> (L - 1)) << (L - 1) != W)
    throw std::invalid_argument("denoiser: H and W must be divisible by 2^(depth-1)");
  if ((H >> (L - 1)) < 1 || (W >> (L - 1)) < 1)
    throw std::invalid_argument("denoiser: resolution collapses before the deepest level");

  DenoiserGraph<T> g;
  g.params.reserve(m.params.size());
  for (const auto& p : m.params) g.params.push_back(t.leaf(p));
  detail::GraphCtx<T> c{&t, &m, &g.params};

  const std::vector<double> se = step_embedding(d, cfg.step_embed_dim);
  Tensor<T> se_t({cfg.step_embed_dim});
  for (size_t i = 0; i < se.size(); ++i) se_t.data[i] = T(se[i]);
  VarId emb = t.leaf(std::move(se_t));
  emb = c.lin("emb.mlp1", emb);
  emb = t.silu(emb);
  emb = c.lin("emb.mlp2", emb);

  VarId x = t.leaf(x_in);
  VarId cnd = t.leaf(cond);

  VarId ctx_tokens = -1;
  if (cfg.attn_middle) {
    VarId cc = cnd;
    for (int j = 0; j + 1 < L; ++j) cc = t.avgpool2(cc);
    cc = c.conv("ctx.embed1", cc);
    cc = t.silu(cc);
    ctx_tokens = c.conv("ctx.embed2", cc);
  }

  VarId h = c.conv("stem", t.concat_c(x, cnd));
  std::vector<VarId> skips;
  for (int i = 0; i < L; ++i) {
    h = c.block("down" + std::to_string(i), h, emb);
    if (i == L - 1 && cfg.attn_last_down)
      h = c.attention("down" + std::to_string(i) + ".attn", h);
    skips.push_back(h);
    if (i < L - 1) {
      h = t.avgpool2(h);
      h = c.conv("down" + std::to_string(i) + ".to", h);
    }
  }

  h = c.block("middle", h, emb);
  if (cfg.attn_middle) {
    h = c.attention("middle.self_attn", h);
    h = c.attention("middle.cross_attn", h, ctx_tokens);
  }

  for (int i = L - 1; i >= 0; --i) {
    h = t.concat_c(h, skips[size_t(i)]);
    h = c.conv("up" + std::to_string(i) + ".fuse", h);
    h = c.block("up" + std::to_string(i), h, emb);
    if (i == L - 1 && cfg.attn_first_up)
      h = c.attention("up" + std::to_string(i) + ".attn", h);
    if (i > 0) {
      h = t.nearest_up2(h);
      h = c.conv("up" + std::to_string(i) + ".smooth", h);
    }
  }

  h = c.norm("head.norm", h);
  h = t.silu(h);
  g.out = c.conv("head", h);
  return g;
}

template <typename T>
Tensor<T> field_to_tensor(const Field& f) {
  Tensor<T> t({f.c, f.h, f.w});
  for (int ch = 0; ch < f.c; ++ch)
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x) t.at(ch, y, x) = T(f.at(y, x, ch));
  return t;
}

template <typename T>
Field tensor_to_field(const Tensor<T>& t) {
  if (t.shape.size() != 3) throw std::invalid_argument("tensor_to_field: want (C,H,W)");
  Field f(t.h(), t.w(), t.c());
  for (int ch = 0; ch < t.c(); ++ch)
    for (int y = 0; y < t.h(); ++y)
      for (int x = 0; x < t.w(); ++x) f.at(y, x, ch) = double(t.at(ch, y, x));
  return f;
}

// Inference-only forward pass: fields in, predicted noise field out.
template <typename T>
Field denoiser_forward(const DenoiserModel<T>& m, const Field& x_sd, int d, const Field& c_img) {
  Tape<T> tape;
  tape.grad_enabled = false;
  auto g = build_denoiser_graph(tape, m, field_to_tensor<T>(x_sd), d, field_to_tensor<T>(c_img));
  return tensor_to_field(tape.value(g.out));
}

// ---- checkpoint format -----------------------------------------------------
//
//   magic "SDCK" | u32 version=1 | u32 json_len | config json |
//   per tensor (plan order): u32 name_len | name | u32 rank | u32 dims[] | f32 data[]
//
// all integers little-endian.

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("checkpoint: truncated while reading u32");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float v) {
  uint32_t u;
  static_assert(sizeof(u) == sizeof(v));
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

inline float read_f32(std::istream& is) {
  const uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const DenoiserModel<T>& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write("SDCK", 4);
  detail::write_u32(os, 1);
  const std::string cfg = m.config.to_json().dump();
  detail::write_u32(os, uint32_t(cfg.size()));
  os.write(cfg.data(), std::streamsize(cfg.size()));
  for (size_t i = 0; i < m.plan.size(); ++i) {
    const ParamInfo& info = m.plan[i];
    detail::write_u32(os, uint32_t(info.name.size()));
    os.write(info.name.data(), std::streamsize(info.name.size()));
    detail::write_u32(os, uint32_t(info.shape.size()));
    for (int d : info.shape) detail::write_u32(os, uint32_t(d));
    for (const T& v : m.params[i].data) detail::write_f32(os, float(v));
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

template <typename T>
DenoiserModel<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SDCK")
    throw FormatError("checkpoint: bad magic (not an SDCK file)");
  const uint32_t version = detail::read_u32(is);
  if (version != 1)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t json_len = detail::read_u32(is);
  std::string cfg_json(json_len, '\0');
  is.read(cfg_json.data(), std::streamsize(json_len));
  if (!is) throw FormatError("checkpoint: truncated config block");

  DenoiserModel<T> m;
  try {
    m.config = DenoiserConfig::from_json(nlohmann::json::parse(cfg_json));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: bad config json: ") + e.what());
  }
  m.plan = param_plan(m.config);
  m.params.reserve(m.plan.size());

  for (const ParamInfo& info : m.plan) {
    const uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    if (!is) throw FormatError("checkpoint: truncated tensor name");
    if (name != info.name)
      throw FormatError("checkpoint: tensor order mismatch, expected '" + info.name + "', found '" +
                        name + "'");
    const uint32_t rank = detail::read_u32(is);
    if (rank != info.shape.size())
      throw FormatError("checkpoint: rank mismatch for '" + name + "'");
    for (size_t d = 0; d < rank; ++d) {
      const uint32_t dim = detail::read_u32(is);
      if (int(dim) != info.shape[d])
        throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    }
    Tensor<T> t(info.shape);
    for (T& v : t.data) {
      v = T(detail::read_f32(is));
      if (!std::isfinite(double(v)))
        throw FormatError("checkpoint: non-finite value in '" + name + "'");
    }
    m.params.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("checkpoint: trailing bytes after last tensor");
  m.rebuild_index();
  return m;
}

}  // namespace spectraldiff
