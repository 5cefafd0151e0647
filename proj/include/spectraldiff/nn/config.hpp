#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace spectraldiff {

enum class Backbone { Product, Conv };

inline const char* to_string(Backbone b) {
  return b == Backbone::Product ? "product" : "conv";
}

inline Backbone backbone_from_string(const std::string& s) {
  if (s == "product") return Backbone::Product;
  if (s == "conv") return Backbone::Conv;
  throw std::invalid_argument("unknown backbone '" + s + "' (want product|conv)");
}

// Architecture description shared by the model builder and the FLOPs report.
// Widths: down block i runs at base*mults[i]; up block i at the width one
// level shallower (clamped at the bottom), which reproduces the reference
// encoder/decoder widths {64,128,256} / {128,64,64}.
struct DenoiserConfig {
  Backbone backbone = Backbone::Product;
  int in_channels = 3;
  int cond_channels = 3;
  int base_channels = 8;
  std::vector<int> channel_mults = {1, 2};
  int r_c = 4;  // bottleneck ratio of the product layer's gating map
  int step_embed_dim = 32;
  bool attn_last_down = false;
  bool attn_middle = true;
  bool attn_first_up = false;

  int depth() const { return static_cast<int>(channel_mults.size()); }

  std::vector<int> channels() const {
    std::vector<int> ch;
    ch.reserve(channel_mults.size());
    for (int m : channel_mults) ch.push_back(base_channels * m);
    return ch;
  }

  std::vector<int> up_channels() const {
    const auto ch = channels();
    std::vector<int> u(ch.size());
    for (size_t i = 0; i < ch.size(); ++i) u[i] = ch[i == 0 ? 0 : i - 1];
    return u;
  }

  void validate() const {
    if (depth() < 1) throw std::invalid_argument("config: depth must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("config: base_channels must be >= 1");
    for (int m : channel_mults)
      if (m < 1) throw std::invalid_argument("config: channel multipliers must be >= 1");
    if (r_c < 1) throw std::invalid_argument("config: r_c must be >= 1");
    if (step_embed_dim < 2 || step_embed_dim % 2 != 0)
      throw std::invalid_argument("config: step_embed_dim must be even and >= 2");
    if (in_channels != 1 && in_channels != 3)
      throw std::invalid_argument("config: in_channels must be 1 or 3");
    if (cond_channels != 1 && cond_channels != 3)
      throw std::invalid_argument("config: cond_channels must be 1 or 3");
    if (backbone == Backbone::Product) {
      for (int c : channels())
        if (c % r_c != 0)
          throw std::invalid_argument("config: r_c must divide channel width " +
                                      std::to_string(c));
    }
  }

  // Reference-scale config: three down blocks {64,128,256}, one middle,
  // three up blocks {128,64,64}, attention at the deepest encoder block,
  // the middle, and the first decoder block.
  static DenoiserConfig reference() {
    DenoiserConfig c;
    c.base_channels = 64;
    c.channel_mults = {1, 2, 4};
    c.step_embed_dim = 256;
    c.attn_last_down = true;
    c.attn_middle = true;
    c.attn_first_up = true;
    return c;
  }

  // Desk-scale default: 2 down / 1 middle / 2 up, base 8, attention in the
  // middle only.
  static DenoiserConfig toy() { return DenoiserConfig{}; }

  nlohmann::json to_json() const {
    return nlohmann::json{{"backbone", to_string(backbone)},
                          {"in_channels", in_channels},
                          {"cond_channels", cond_channels},
                          {"base_channels", base_channels},
                          {"channel_mults", channel_mults},
                          {"r_c", r_c},
                          {"step_embed_dim", step_embed_dim},
                          {"attn_last_down", attn_last_down},
                          {"attn_middle", attn_middle},
                          {"attn_first_up", attn_first_up}};
  }

  static DenoiserConfig from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.backbone = backbone_from_string(j.at("backbone").get<std::string>());
    c.in_channels = j.at("in_channels").get<int>();
    c.cond_channels = j.at("cond_channels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.channel_mults = j.at("channel_mults").get<std::vector<int>>();
    c.r_c = j.at("r_c").get<int>();
    c.step_embed_dim = j.at("step_embed_dim").get<int>();
    c.attn_last_down = j.at("attn_last_down").get<bool>();
    c.attn_middle = j.at("attn_middle").get<bool>();
    c.attn_first_up = j.at("attn_first_up").get<bool>();
    c.validate();
    return c;
  }
};

// Largest group count <= 8 that divides the channel width; reference widths
// always take 8, tiny test widths degrade gracefully.
inline int norm_groups(int channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace spectraldiff
