#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectraldiff/nn/config.hpp"

namespace spectraldiff {

// 2 k^2 C_in C_out H W: multiply and add counted separately (1 MAC = 2 FLOPs).
inline long long conv_flops(int c_in, int c_out, int h, int w, int k) {
  if (c_in < 1 || c_out < 1 || h < 1 || w < 1 || k < 1)
    throw std::invalid_argument("conv_flops: dimensions must be positive");
  return 2LL * k * k * c_in * c_out * h * w;
}

// Two pointwise bottleneck maps plus the elementwise modulation:
// (4/r_C) C^2 H W + C H W.
inline long long product_flops(int c, int h, int w, int r_c) {
  if (c < 1 || h < 1 || w < 1 || r_c < 1)
    throw std::invalid_argument("product_flops: dimensions must be positive");
  if (c % r_c != 0)
    throw std::invalid_argument("product_flops: r_c must divide the channel width");
  return 4LL * (c / r_c) * c * h * w + 1LL * c * h * w;
}

// Per-layer reduction of a 3x3 conv over a product layer at equal width:
// 18 C^2 / ((4/r_C) C^2 + C); at r_C = 4 this is 18C/(C+1), tending to 18.
// Evaluated in real arithmetic — the closed form is defined for any width.
inline double reduction_ratio(int c, int r_c = 4) {
  if (c < 1 || r_c < 1) throw std::invalid_argument("reduction_ratio: bad arguments");
  const double cd = c;
  return 18.0 * cd * cd / ((4.0 / r_c) * cd * cd + cd);
}

struct FlopsRow {
  std::string name;
  std::string kind;  // conv3 | pointwise | product | attention | norm | act | resample
  int c_in = 0, c_out = 0, h = 0, w = 0;
  long long flops = 0;
  // Rows that the backbone swap actually replaces; only these enter the
  // product-vs-conv ratio. Attention/norm/act/plumbing are identical in both
  // backbones and excluded.
  bool in_ratio = false;
};

struct FlopsReport {
  std::vector<FlopsRow> product_rows;
  std::vector<FlopsRow> conv_rows;

  static long long total(const std::vector<FlopsRow>& rows) {
    long long t = 0;
    for (const auto& r : rows) t += r.flops;
    return t;
  }
  static long long ratio_bucket(const std::vector<FlopsRow>& rows) {
    long long t = 0;
    for (const auto& r : rows)
      if (r.in_ratio) t += r.flops;
    return t;
  }

  long long product_total() const { return total(product_rows); }
  long long conv_total() const { return total(conv_rows); }
  double backbone_ratio() const {
    return double(ratio_bucket(product_rows)) / double(ratio_bucket(conv_rows));
  }
};

namespace detail {

inline long long attention_flops(int c, int tokens, int ctx_tokens) {
  // q,k,v,out projections + scores + softmax + weighted sum.
  long long proj = 4LL * 2 * c * c * tokens;
  long long scores = 2LL * c * tokens * ctx_tokens;
  long long softmax = 3LL * tokens * ctx_tokens;
  long long mix = 2LL * c * tokens * ctx_tokens;
  return proj + scores + softmax + mix;
}

struct RowEmitter {
  std::vector<FlopsRow>* rows;
  Backbone backbone;
  const DenoiserConfig* cfg;

  void push(const std::string& name, const std::string& kind, int c_in, int c_out, int h, int w,
            long long flops, bool in_ratio) {
    rows->push_back({name, kind, c_in, c_out, h, w, flops, in_ratio});
  }
  void norm(const std::string& name, int c, int h, int w) {
    push(name, "norm", c, c, h, w, 5LL * c * h * w, false);
  }
  void act(const std::string& name, int c, int h, int w) {
    push(name, "act", c, c, h, w, 4LL * c * h * w, false);
  }
  void pointwise(const std::string& name, int c_in, int c_out, int h, int w,
                 bool in_ratio = false) {
    push(name, "pointwise", c_in, c_out, h, w, conv_flops(c_in, c_out, h, w, 1), in_ratio);
  }

  // One residual block. Conv: norm-act-conv3, add step embedding,
  // norm-act-conv3. Product: norm, product, add step embedding, act, product.
  void block(const std::string& name, int c, int h, int w) {
    norm(name + ".norm1", c, h, w);
    if (backbone == Backbone::Conv) {
      act(name + ".act1", c, h, w);
      push(name + ".conv1", "conv3", c, c, h, w, conv_flops(c, c, h, w, 3), true);
      pointwise(name + ".emb", cfg->step_embed_dim, c, 1, 1);
      norm(name + ".norm2", c, h, w);
      act(name + ".act2", c, h, w);
      push(name + ".conv2", "conv3", c, c, h, w, conv_flops(c, c, h, w, 3), true);
    } else {
      push(name + ".product1", "product", c, c, h, w, product_flops(c, h, w, cfg->r_c), true);
      act(name + ".product1.gate", c / cfg->r_c, h, w);
      pointwise(name + ".emb", cfg->step_embed_dim, c, 1, 1);
      act(name + ".act", c, h, w);
      push(name + ".product2", "product", c, c, h, w, product_flops(c, h, w, cfg->r_c), true);
      act(name + ".product2.gate", c / cfg->r_c, h, w);
    }
  }

  void self_attention(const std::string& name, int c, int h, int w) {
    norm(name + ".norm", c, h, w);
    push(name, "attention", c, c, h, w, attention_flops(c, h * w, h * w), false);
  }
  void cross_attention(const std::string& name, int c, int h, int w) {
    norm(name + ".norm", c, h, w);
    push(name, "attention", c, c, h, w, attention_flops(c, h * w, h * w), false);
  }
};

inline std::vector<FlopsRow> backbone_rows(const DenoiserConfig& cfg_in, int H, int W,
                                           Backbone backbone) {
  DenoiserConfig cfg = cfg_in;
  cfg.backbone = backbone;
  cfg.validate();
  const int L = cfg.depth();
  if ((H >> (L - 1)) << (L - 1) != H || (W >> (L - 1)) << (L - 1) != W)
    throw std::invalid_argument("model_report: H and W must be divisible by 2^(depth-1)");
  if ((H >> (L - 1)) < 1 || (W >> (L - 1)) < 1)
    throw std::invalid_argument("model_report: resolution collapses before the deepest level");

  const auto ch = cfg.channels();
  const auto up = cfg.up_channels();
  const int in_ch = cfg.in_channels + cfg.cond_channels;
  const bool conv = backbone == Backbone::Conv;

  std::vector<FlopsRow> rows;
  RowEmitter e{&rows, backbone, &cfg};

  if (conv)
    e.push("stem", "conv3", in_ch, ch[0], H, W, conv_flops(in_ch, ch[0], H, W, 3), true);
  else
    e.pointwise("stem", in_ch, ch[0], H, W, true);

  e.pointwise("emb.mlp1", cfg.step_embed_dim, cfg.step_embed_dim, 1, 1);
  e.act("emb.act", cfg.step_embed_dim, 1, 1);
  e.pointwise("emb.mlp2", cfg.step_embed_dim, cfg.step_embed_dim, 1, 1);

  const int mh = H >> (L - 1), mw = W >> (L - 1);
  const int mid = ch[L - 1];
  if (cfg.attn_middle) {
    for (int j = 0; j + 1 < L; ++j)
      e.push("ctx.pool" + std::to_string(j), "resample", cfg.cond_channels, cfg.cond_channels,
             H >> (j + 1), W >> (j + 1),
             5LL * cfg.cond_channels * (H >> (j + 1)) * (W >> (j + 1)), false);
    e.pointwise("ctx.embed1", cfg.cond_channels, mid, mh, mw);
    e.act("ctx.act", mid, mh, mw);
    e.pointwise("ctx.embed2", mid, mid, mh, mw);
  }

  for (int i = 0; i < L; ++i) {
    const int h = H >> i, w = W >> i;
    e.block("down" + std::to_string(i), ch[i], h, w);
    if (i == L - 1 && cfg.attn_last_down)
      e.self_attention("down" + std::to_string(i) + ".attn", ch[i], h, w);
    if (i < L - 1) {
      e.push("down" + std::to_string(i) + ".pool", "resample", ch[i], ch[i], h / 2, w / 2,
             5LL * ch[i] * (h / 2) * (w / 2), false);
      e.pointwise("down" + std::to_string(i) + ".to", ch[i], ch[i + 1], h / 2, w / 2);
    }
  }

  e.block("middle", mid, mh, mw);
  if (cfg.attn_middle) {
    e.self_attention("middle.self_attn", mid, mh, mw);
    e.cross_attention("middle.cross_attn", mid, mh, mw);
  }

  for (int i = L - 1; i >= 0; --i) {
    const int h = H >> i, w = W >> i;
    const int w_in = (i == L - 1) ? ch[L - 1] : up[i + 1];
    e.pointwise("up" + std::to_string(i) + ".fuse", w_in + ch[i], up[i], h, w);
    e.block("up" + std::to_string(i), up[i], h, w);
    if (i == L - 1 && cfg.attn_first_up)
      e.self_attention("up" + std::to_string(i) + ".attn", up[i], h, w);
    if (i > 0) {
      e.push("up" + std::to_string(i) + ".nearest", "resample", up[i], up[i], h * 2, w * 2,
             1LL * up[i] * h * 2 * w * 2, false);
      e.pointwise("up" + std::to_string(i) + ".smooth", up[i], up[i], h * 2, w * 2);
    }
  }

  e.norm("head.norm", up[0], H, W);
  e.act("head.act", up[0], H, W);
  if (conv)
    e.push("head", "conv3", up[0], cfg.in_channels, H, W,
           conv_flops(up[0], cfg.in_channels, H, W, 3), true);
  else
    e.pointwise("head", up[0], cfg.in_channels, H, W, true);

  return rows;
}

}  // namespace detail

inline FlopsReport model_report(const DenoiserConfig& cfg, int H, int W) {
  FlopsReport r;
  r.product_rows = detail::backbone_rows(cfg, H, W, Backbone::Product);
  r.conv_rows = detail::backbone_rows(cfg, H, W, Backbone::Conv);
  return r;
}

}  // namespace spectraldiff
