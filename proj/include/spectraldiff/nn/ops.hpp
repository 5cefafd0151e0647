#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spectraldiff/nn/tensor.hpp"

namespace spectraldiff {

// Thread-local FLOP meter. Counts follow the reporting conventions of the
// closed-form model (1 MAC = 2 FLOPs for conv/product/attention matmuls,
// stylized constants for norm/act/resample) so an instrumented forward pass
// can be compared against the analytic report.
namespace flopmeter {
inline thread_local long long count = 0;
inline thread_local bool enabled = false;
inline void add(long long n) {
  if (enabled) count += n;
}
inline void reset() { count = 0; }
}  // namespace flopmeter

using VarId = int;

// Reverse-mode tape. Operations append nodes holding the forward value and a
// closure that scatters the node's gradient to its inputs; backward() runs
// the closures in reverse creation order.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily by backward()
    std::function<void(Tape&)> backprop;
  };

  bool grad_enabled = true;
  std::vector<Node> nodes;

  VarId push(Tensor<T> value, std::function<void(Tape&)> backprop = nullptr) {
    nodes.push_back({std::move(value), Tensor<T>(), grad_enabled ? std::move(backprop) : nullptr});
    return VarId(nodes.size()) - 1;
  }

  VarId leaf(Tensor<T> value) { return push(std::move(value)); }

  Tensor<T>& value(VarId id) { return nodes.at(id).value; }
  const Tensor<T>& value(VarId id) const { return nodes.at(id).value; }
  Tensor<T>& grad(VarId id) { return nodes.at(id).grad; }

  void accumulate(VarId id, size_t i, T g) {
    Tensor<T>& t = nodes[id].grad;
    if (t.data.empty()) t = Tensor<T>(nodes[id].value.shape);
    t.data[i] += g;
  }

  void backward(VarId loss) {
    if (!grad_enabled) throw std::logic_error("Tape: backward with gradients disabled");
    if (nodes.at(loss).value.size() != 1)
      throw std::logic_error("Tape: backward expects a scalar loss");
    for (auto& n : nodes) n.grad = Tensor<T>();
    nodes[loss].grad = Tensor<T>(nodes[loss].value.shape);
    nodes[loss].grad.data[0] = T(1);
    for (int i = loss; i >= 0; --i) {
      if (nodes[i].backprop && !nodes[i].grad.data.empty()) {
        current_ = i;
        nodes[i].backprop(*this);
      }
    }
  }

 private:
  // Ensures a grad tensor exists before element-wise accumulation loops.
  Tensor<T>& grad_buf(VarId id) {
    Tensor<T>& t = nodes[id].grad;
    if (t.data.empty()) t = Tensor<T>(nodes[id].value.shape);
    return t;
  }

 public:
  // ---- operators ----

  // y = a + b (same shape).
  VarId add(VarId a, VarId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> out(ta.shape);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
    return push(std::move(out), [a, b](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      Tensor<T>& ga = t.grad_buf(a);
      Tensor<T>& gb = t.grad_buf(b);
      for (size_t i = 0; i < g.size(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] += g.data[i];
      }
    });
  }

  // y = a * b elementwise (same shape) — the modulation of the product layer.
  VarId mul(VarId a, VarId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out(ta.shape);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
    flopmeter::add(static_cast<long long>(out.size()));
    return push(std::move(out), [a, b](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      const Tensor<T>& va = t.nodes[a].value;
      const Tensor<T>& vb = t.nodes[b].value;
      Tensor<T>& ga = t.grad_buf(a);
      Tensor<T>& gb = t.grad_buf(b);
      for (size_t i = 0; i < g.size(); ++i) {
        ga.data[i] += g.data[i] * vb.data[i];
        gb.data[i] += g.data[i] * va.data[i];
      }
    });
  }

  VarId scale(VarId a, T s) {
    Tensor<T> out = value(a);
    for (T& v : out.data) v *= s;
    return push(std::move(out), [a, s](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      Tensor<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * s;
    });
  }

  // SiLU: y = x * sigmoid(x).
  VarId silu(VarId a) {
    const Tensor<T>& ta = value(a);
    Tensor<T> out(ta.shape);
    for (size_t i = 0; i < out.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-ta.data[i]));
      out.data[i] = ta.data[i] * s;
    }
    flopmeter::add(4LL * static_cast<long long>(out.size()));
    return push(std::move(out), [a](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      const Tensor<T>& va = t.nodes[a].value;
      Tensor<T>& ga = t.grad_buf(a);
      for (size_t i = 0; i < g.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-va.data[i]));
        ga.data[i] += g.data[i] * s * (T(1) + va.data[i] * (T(1) - s));
      }
    });
  }

  // 2-D correlation, stride 1, zero pad k/2; x (Cin,H,W), w (Cout,Cin,k,k),
  // b (Cout) -> (Cout,H,W).
  VarId conv2d(VarId x, VarId w, VarId b) {
    const Tensor<T>& tx = value(x);
    const Tensor<T>& tw = value(w);
    const Tensor<T>& tb = value(b);
    if (tx.shape.size() != 3 || tw.shape.size() != 4)
      throw std::invalid_argument("conv2d: bad ranks");
    const int cin = tx.shape[0], h = tx.shape[1], wd = tx.shape[2];
    const int cout = tw.shape[0], k = tw.shape[2];
    if (tw.shape[1] != cin || tw.shape[3] != k || tb.shape[0] != cout)
      throw std::invalid_argument("conv2d: shape mismatch");
    const int pad = k / 2;

    Tensor<T> out({cout, h, wd});
    for (int oc = 0; oc < cout; ++oc)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < wd; ++xx) {
          T acc = tb.data[oc];
          for (int ic = 0; ic < cin; ++ic)
            for (int ky = 0; ky < k; ++ky) {
              const int sy = y + ky - pad;
              if (sy < 0 || sy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int sx = xx + kx - pad;
                if (sx < 0 || sx >= wd) continue;
                acc += tw.data[((size_t(oc) * cin + ic) * k + ky) * k + kx] * tx.at(ic, sy, sx);
              }
            }
          out.at(oc, y, xx) = acc;
        }
    flopmeter::add(2LL * k * k * cin * cout * h * wd);
    return push(std::move(out), [x, w, b, cin, cout, h, wd, k, pad](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      const Tensor<T>& vx = t.nodes[x].value;
      const Tensor<T>& vw = t.nodes[w].value;
      Tensor<T>& gx = t.grad_buf(x);
      Tensor<T>& gw = t.grad_buf(w);
      Tensor<T>& gb = t.grad_buf(b);
      for (int oc = 0; oc < cout; ++oc)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < wd; ++xx) {
            const T go = g.at(oc, y, xx);
            if (go == T(0)) continue;
            gb.data[oc] += go;
            for (int ic = 0; ic < cin; ++ic)
              for (int ky = 0; ky < k; ++ky) {
                const int sy = y + ky - pad;
                if (sy < 0 || sy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int sx = xx + kx - pad;
                  if (sx < 0 || sx >= wd) continue;
                  const size_t wi = ((size_t(oc) * cin + ic) * k + ky) * k + kx;
                  gw.data[wi] += go * vx.at(ic, sy, sx);
                  gx.at(ic, sy, sx) += go * vw.data[wi];
                }
              }
          }
    });
  }

  // Fully-connected map on a vector: x (Cin), w (Cout,Cin), b (Cout).
  VarId linear(VarId x, VarId w, VarId b) {
    const Tensor<T>& tx = value(x);
    const Tensor<T>& tw = value(w);
    const Tensor<T>& tb = value(b);
    if (tx.shape.size() != 1 || tw.shape.size() != 2 || tw.shape[1] != tx.shape[0] ||
        tb.shape[0] != tw.shape[0])
      throw std::invalid_argument("linear: shape mismatch");
    const int cin = tx.shape[0], cout = tw.shape[0];
    Tensor<T> out({cout});
    for (int o = 0; o < cout; ++o) {
      T acc = tb.data[o];
      for (int i = 0; i < cin; ++i) acc += tw.data[size_t(o) * cin + i] * tx.data[i];
      out.data[o] = acc;
    }
    flopmeter::add(2LL * cin * cout);
    return push(std::move(out), [x, w, b, cin, cout](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      const Tensor<T>& vx = t.nodes[x].value;
      const Tensor<T>& vw = t.nodes[w].value;
      Tensor<T>& gx = t.grad_buf(x);
      Tensor<T>& gw = t.grad_buf(w);
      Tensor<T>& gb = t.grad_buf(b);
      for (int o = 0; o < cout; ++o) {
        const T go = g.data[o];
        gb.data[o] += go;
        for (int i = 0; i < cin; ++i) {
          gw.data[size_t(o) * cin + i] += go * vx.data[i];
          gx.data[i] += go * vw.data[size_t(o) * cin + i];
        }
      }
    });
  }

  // x (C,H,W) plus a per-channel vector (C) broadcast over space.
  VarId add_channel_bias(VarId x, VarId bias) {
    const Tensor<T>& tx = value(x);
    const Tensor<T>& tb = value(bias);
    if (tx.shape.size() != 3 || tb.shape.size() != 1 || tb.shape[0] != tx.shape[0])
      throw std::invalid_argument("add_channel_bias: shape mismatch");
    Tensor<T> out = tx;
    const int c = tx.shape[0], hw = tx.shape[1] * tx.shape[2];
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < hw; ++i) out.data[size_t(ch) * hw + i] += tb.data[ch];
    return push(std::move(out), [x, bias, c, hw](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      Tensor<T>& gx = t.grad_buf(x);
      Tensor<T>& gb = t.grad_buf(bias);
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) {
          const T go = g.data[size_t(ch) * hw + i];
          gx.data[size_t(ch) * hw + i] += go;
          gb.data[ch] += go;
        }
    });
  }

  // Group normalization with affine parameters gamma/beta (C).
  VarId group_norm(VarId x, VarId gamma, VarId beta, int groups) {
    const Tensor<T>& tx = value(x);
    if (tx.shape.size() != 3) throw std::invalid_argument("group_norm: want (C,H,W)");
    const int c = tx.shape[0], hw = tx.shape[1] * tx.shape[2];
    if (c % groups != 0) throw std::invalid_argument("group_norm: groups must divide C");
    const Tensor<T>& tg = value(gamma);
    const Tensor<T>& tb = value(beta);
    if (tg.shape[0] != c || tb.shape[0] != c)
      throw std::invalid_argument("group_norm: affine shape mismatch");
    const int gsize = (c / groups) * hw;
    const T eps = T(1e-5);

    Tensor<T> out(tx.shape);
    std::vector<T> inv_std(groups), mean(groups);
    for (int g = 0; g < groups; ++g) {
      const size_t base = size_t(g) * gsize;
      T mu = 0;
      for (int i = 0; i < gsize; ++i) mu += tx.data[base + i];
      mu /= T(gsize);
      T var = 0;
      for (int i = 0; i < gsize; ++i) {
        const T d = tx.data[base + i] - mu;
        var += d * d;
      }
      var /= T(gsize);
      mean[g] = mu;
      inv_std[g] = T(1) / std::sqrt(var + eps);
    }
    for (int ch = 0; ch < c; ++ch) {
      const int g = ch / (c / groups);
      for (int i = 0; i < hw; ++i) {
        const size_t idx = size_t(ch) * hw + i;
        out.data[idx] = tg.data[ch] * (tx.data[idx] - mean[g]) * inv_std[g] + tb.data[ch];
      }
    }
    flopmeter::add(5LL * c * hw);
    return push(std::move(out),
                [x, gamma, beta, groups, c, hw, gsize, mean, inv_std](Tape& t) {
                  VarId self = t.current_;
                  const Tensor<T>& g = t.nodes[self].grad;
                  const Tensor<T>& vx = t.nodes[x].value;
                  const Tensor<T>& vg = t.nodes[gamma].value;
                  Tensor<T>& gx = t.grad_buf(x);
                  Tensor<T>& ggam = t.grad_buf(gamma);
                  Tensor<T>& gbet = t.grad_buf(beta);
                  const int cpg = c / groups;
                  for (int grp = 0; grp < groups; ++grp) {
                    const size_t base = size_t(grp) * gsize;
                    // ghat = upstream grad routed through the affine scale;
                    // y = normalized value.
                    T sum_ghat = 0, sum_ghat_y = 0;
                    for (int ch = grp * cpg; ch < (grp + 1) * cpg; ++ch)
                      for (int i = 0; i < hw; ++i) {
                        const size_t idx = size_t(ch) * hw + i;
                        const T y = (vx.data[idx] - mean[grp]) * inv_std[grp];
                        const T go = g.data[idx];
                        ggam.data[ch] += go * y;
                        gbet.data[ch] += go;
                        const T ghat = go * vg.data[ch];
                        sum_ghat += ghat;
                        sum_ghat_y += ghat * y;
                      }
                    const T m = T(1) / T(gsize);
                    for (int ch = grp * cpg; ch < (grp + 1) * cpg; ++ch)
                      for (int i = 0; i < hw; ++i) {
                        const size_t idx = size_t(ch) * hw + i;
                        const T y = (vx.data[idx] - mean[grp]) * inv_std[grp];
                        const T ghat = g.data[idx] * vg.data[ch];
                        gx.data[idx] +=
                            inv_std[grp] * (ghat - m * sum_ghat - y * m * sum_ghat_y);
                      }
                  }
                });
  }

  // 2x2 average pooling, stride 2; requires even H and W.
  VarId avgpool2(VarId x) {
    const Tensor<T>& tx = value(x);
    const int c = tx.shape[0], h = tx.shape[1], w = tx.shape[2];
    if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("avgpool2: odd resolution");
    Tensor<T> out({c, h / 2, w / 2});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h / 2; ++y)
        for (int xx = 0; xx < w / 2; ++xx)
          out.at(ch, y, xx) = (tx.at(ch, 2 * y, 2 * xx) + tx.at(ch, 2 * y, 2 * xx + 1) +
                               tx.at(ch, 2 * y + 1, 2 * xx) + tx.at(ch, 2 * y + 1, 2 * xx + 1)) /
                              T(4);
    flopmeter::add(5LL * c * (h / 2) * (w / 2));
    return push(std::move(out), [x, c, h, w](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      Tensor<T>& gx = t.grad_buf(x);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
          for (int xx = 0; xx < w / 2; ++xx) {
            const T q = g.data[(size_t(ch) * (h / 2) + y) * (w / 2) + xx] / T(4);
            gx.data[(size_t(ch) * h + 2 * y) * w + 2 * xx] += q;
            gx.data[(size_t(ch) * h + 2 * y) * w + 2 * xx + 1] += q;
            gx.data[(size_t(ch) * h + 2 * y + 1) * w + 2 * xx] += q;
            gx.data[(size_t(ch) * h + 2 * y + 1) * w + 2 * xx + 1] += q;
          }
    });
  }

  // Nearest-neighbor 2x upsampling.
  VarId nearest_up2(VarId x) {
    const Tensor<T>& tx = value(x);
    const int c = tx.shape[0], h = tx.shape[1], w = tx.shape[2];
    Tensor<T> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx) out.at(ch, y, xx) = tx.at(ch, y / 2, xx / 2);
    flopmeter::add(1LL * c * 2 * h * 2 * w);
    return push(std::move(out), [x, c, h, w](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      Tensor<T>& gx = t.grad_buf(x);
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
          for (int xx = 0; xx < 2 * w; ++xx)
            gx.data[(size_t(ch) * h + y / 2) * w + xx / 2] +=
                g.data[(size_t(ch) * 2 * h + y) * 2 * w + xx];
    });
  }

  // Channel concatenation of two (C,H,W) maps.
  VarId concat_c(VarId a, VarId b) {
    const Tensor<T>& ta = value(a);
    const Tensor<T>& tb = value(b);
    if (ta.shape.size() != 3 || tb.shape.size() != 3 || ta.shape[1] != tb.shape[1] ||
        ta.shape[2] != tb.shape[2])
      throw std::invalid_argument("concat_c: spatial mismatch");
    Tensor<T> out({ta.shape[0] + tb.shape[0], ta.shape[1], ta.shape[2]});
    std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + ta.size());
    const size_t na = ta.size();
    return push(std::move(out), [a, b, na](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      Tensor<T>& ga = t.grad_buf(a);
      Tensor<T>& gb = t.grad_buf(b);
      for (size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
      for (size_t i = na; i < g.size(); ++i) gb.data[i - na] += g.data[i];
    });
  }

  // Single-head scaled dot-product attention over flattened spatial tokens.
  // q (C,Hq,Wq), k and v (C,Hk,Wk) -> (C,Hq,Wq). Projections live outside.
  VarId attend(VarId q, VarId k, VarId v) {
    const Tensor<T>& tq = value(q);
    const Tensor<T>& tk = value(k);
    const Tensor<T>& tv = value(v);
    if (tq.shape[0] != tk.shape[0] || tk.shape != tv.shape)
      throw std::invalid_argument("attend: shape mismatch");
    const int c = tq.shape[0];
    const int nq = tq.shape[1] * tq.shape[2];
    const int nk = tk.shape[1] * tk.shape[2];
    const T inv_sqrt_c = T(1) / std::sqrt(T(c));

    // Token t of q is column t across channels.
    std::vector<T> attn(size_t(nq) * nk);
    for (int i = 0; i < nq; ++i) {
      T row_max = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < nk; ++j) {
        T s = 0;
        for (int ch = 0; ch < c; ++ch)
          s += tq.data[size_t(ch) * nq + i] * tk.data[size_t(ch) * nk + j];
        s *= inv_sqrt_c;
        attn[size_t(i) * nk + j] = s;
        row_max = std::max(row_max, s);
      }
      T denom = 0;
      for (int j = 0; j < nk; ++j) {
        T& a = attn[size_t(i) * nk + j];
        a = std::exp(a - row_max);
        denom += a;
      }
      for (int j = 0; j < nk; ++j) attn[size_t(i) * nk + j] /= denom;
    }

    Tensor<T> out(tq.shape);
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < nq; ++i) {
        T acc = 0;
        for (int j = 0; j < nk; ++j)
          acc += attn[size_t(i) * nk + j] * tv.data[size_t(ch) * nk + j];
        out.data[size_t(ch) * nq + i] = acc;
      }
    flopmeter::add(2LL * c * nq * nk + 3LL * nq * nk + 2LL * c * nq * nk);
    return push(std::move(out), [q, k, v, c, nq, nk, inv_sqrt_c, attn](Tape& t) {
      VarId self = t.current_;
      const Tensor<T>& g = t.nodes[self].grad;
      const Tensor<T>& vq = t.nodes[q].value;
      const Tensor<T>& vk = t.nodes[k].value;
      const Tensor<T>& vv = t.nodes[v].value;
      Tensor<T>& gq = t.grad_buf(q);
      Tensor<T>& gk = t.grad_buf(k);
      Tensor<T>& gv = t.grad_buf(v);

      // dV = A^T dO ; dA = dO V^T ; dS = A o (dA - rowsum(dA o A));
      // dQ = dS K / sqrt(C); dK = dS^T Q / sqrt(C).
      std::vector<T> d_attn(size_t(nq) * nk, T(0));
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < nq; ++i) {
          const T go = g.data[size_t(ch) * nq + i];
          if (go == T(0)) continue;
          for (int j = 0; j < nk; ++j) {
            gv.data[size_t(ch) * nk + j] += attn[size_t(i) * nk + j] * go;
            d_attn[size_t(i) * nk + j] += go * vv.data[size_t(ch) * nk + j];
          }
        }
      for (int i = 0; i < nq; ++i) {
        T dot = 0;
        for (int j = 0; j < nk; ++j)
          dot += d_attn[size_t(i) * nk + j] * attn[size_t(i) * nk + j];
        for (int j = 0; j < nk; ++j) {
          const T ds = attn[size_t(i) * nk + j] * (d_attn[size_t(i) * nk + j] - dot) * inv_sqrt_c;
          for (int ch = 0; ch < c; ++ch) {
            gq.data[size_t(ch) * nq + i] += ds * vk.data[size_t(ch) * nk + j];
            gk.data[size_t(ch) * nk + j] += ds * vq.data[size_t(ch) * nq + i];
          }
        }
      }
    });
  }

  // Mean squared error against a constant target: mean_i (x_i - t_i)^2.
  VarId mse_loss(VarId x, const Tensor<T>& target) {
    const Tensor<T>& tx = value(x);
    if (!tx.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    Tensor<T> out({1});
    T acc = 0;
    for (size_t i = 0; i < tx.size(); ++i) {
      const T d = tx.data[i] - target.data[i];
      acc += d * d;
    }
    out.data[0] = acc / T(tx.size());
    Tensor<T> tgt = target;
    return push(std::move(out), [x, tgt](Tape& t) {
      VarId self = t.current_;
      const T go = t.nodes[self].grad.data[0];
      const Tensor<T>& vx = t.nodes[x].value;
      Tensor<T>& gx = t.grad_buf(x);
      const T scale = go * T(2) / T(vx.size());
      for (size_t i = 0; i < vx.size(); ++i)
        gx.data[i] += scale * (vx.data[i] - tgt.data[i]);
    });
  }

  // The executing node's id, set by backward() before each closure runs.
  VarId current_ = -1;
};

}  // namespace spectraldiff
