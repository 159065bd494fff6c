#pragma once

// Loop-level transcriptions of the PCEM and FCEM formulas. Nothing here calls
// into smgaa::ops; every primitive is an explicit loop over (b, c, f, t).

#include <cmath>
#include <string>
#include <vector>

#include "smgaa/kernels.hpp"
#include "smgaa/model.hpp"

namespace smgaa::literal {

inline Tensor conv(const Tensor& x, const Tensor& w, const Tensor& bias, Padding pad, std::size_t groups) {
  const std::size_t B = x.dim(0), F = x.dim(2), T = x.dim(3);
  const std::size_t CO = w.dim(0), CG = w.dim(1), KF = w.dim(2), KT = w.dim(3);
  const std::size_t OF = F + pad.top + pad.bottom - KF + 1, OT = T + pad.left + pad.right - KT + 1;
  const std::size_t per_group = CO / groups;
  Tensor out({B, CO, OF, OT});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < CO; ++co)
      for (std::size_t f = 0; f < OF; ++f)
        for (std::size_t t = 0; t < OT; ++t) {
          double acc = bias.defined() ? bias[co] : 0.0;
          for (std::size_t cg = 0; cg < CG; ++cg)
            for (std::size_t kf = 0; kf < KF; ++kf)
              for (std::size_t kt = 0; kt < KT; ++kt) {
                const long fi = static_cast<long>(f + kf) - static_cast<long>(pad.top);
                const long ti = static_cast<long>(t + kt) - static_cast<long>(pad.left);
                if (fi < 0 || ti < 0 || fi >= static_cast<long>(F) || ti >= static_cast<long>(T)) continue;
                acc += w.at(co, cg, kf, kt) * x.at(b, (co / per_group) * CG + cg, fi, ti);
              }
          out.at(b, co, f, t) = acc;
        }
  return out;
}

// Batch statistics (biased variance) in train mode, running statistics otherwise.
inline Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& rmean,
                         const Tensor& rvar, double eps, bool train) {
  const std::size_t B = x.dim(0), C = x.dim(1), F = x.dim(2), T = x.dim(3);
  Tensor out(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double mean = rmean[c], var = rvar[c];
    if (train) {
      const double n = static_cast<double>(B * F * T);
      mean = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t t = 0; t < T; ++t) mean += x.at(b, c, f, t);
      mean /= n;
      var = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t t = 0; t < T; ++t) var += (x.at(b, c, f, t) - mean) * (x.at(b, c, f, t) - mean);
      var /= n;
    }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t)
          out.at(b, c, f, t) = gamma[c] * (x.at(b, c, f, t) - mean) / std::sqrt(var + eps) + beta[c];
  }
  return out;
}

template <typename Fn>
Tensor map(const Tensor& x, Fn fn) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = fn(x[i]);
  return out;
}

inline Tensor gelu(const Tensor& x) {
  return map(x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); });
}
inline Tensor sigmoid(const Tensor& x) {
  return map(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline Tensor gap(const Tensor& x) {
  const std::size_t B = x.dim(0), C = x.dim(1), F = x.dim(2), T = x.dim(3);
  Tensor out({B, C, 1, 1});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t t = 0; t < T; ++t) s += x.at(b, c, f, t);
      out.at(b, c, 0, 0) = s / static_cast<double>(F * T);
    }
  return out;
}

// out[b,c,f,t] = a[...] op g[b,c,f|0,t|0] where g may have singleton F/T axes.
template <typename Op>
Tensor broadcast(const Tensor& a, const Tensor& g, Op op) {
  Tensor out(a.shape());
  for (std::size_t b = 0; b < a.dim(0); ++b)
    for (std::size_t c = 0; c < a.dim(1); ++c)
      for (std::size_t f = 0; f < a.dim(2); ++f)
        for (std::size_t t = 0; t < a.dim(3); ++t)
          out.at(b, c, f, t) = op(a.at(b, c, f, t), g.at(b, c, g.dim(2) == 1 ? 0 : f, g.dim(3) == 1 ? 0 : t));
  return out;
}
inline Tensor mul(const Tensor& a, const Tensor& g) { return broadcast(a, g, [](double x, double y) { return x * y; }); }
inline Tensor add(const Tensor& a, const Tensor& g) { return broadcast(a, g, [](double x, double y) { return x + y; }); }

inline Tensor pool_f(const Tensor& x, std::size_t target, bool use_max) {
  const std::size_t F = x.dim(2);
  Tensor out({x.dim(0), x.dim(1), target, x.dim(3)});
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t c = 0; c < x.dim(1); ++c)
      for (std::size_t i = 0; i < target; ++i)
        for (std::size_t t = 0; t < x.dim(3); ++t) {
          const std::size_t s = i * F / target, e = (i + 1) * F / target;
          double acc = use_max ? x.at(b, c, s, t) : 0.0;
          for (std::size_t f = s; f < e; ++f)
            acc = use_max ? std::max(acc, x.at(b, c, f, t)) : acc + x.at(b, c, f, t);
          out.at(b, c, i, t) = use_max ? acc : acc / static_cast<double>(e - s);
        }
  return out;
}

inline Tensor resize_f(const Tensor& x, std::size_t target) {
  const std::size_t F = x.dim(2);
  Tensor out({x.dim(0), x.dim(1), target, x.dim(3)});
  for (std::size_t i = 0; i < target; ++i) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(F) / static_cast<double>(target) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(F - 1));
    const std::size_t lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, F - 1);
    const double w = src - static_cast<double>(lo);
    for (std::size_t b = 0; b < x.dim(0); ++b)
      for (std::size_t c = 0; c < x.dim(1); ++c)
        for (std::size_t t = 0; t < x.dim(3); ++t)
          out.at(b, c, i, t) = (1.0 - w) * x.at(b, c, lo, t) + w * x.at(b, c, hi, t);
  }
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts) {
  std::size_t C = 0;
  for (const auto& p : parts) C += p.dim(1);
  const Tensor& first = parts.front();
  Tensor out({first.dim(0), C, first.dim(2), first.dim(3)});
  std::size_t base = 0;
  for (const auto& p : parts) {
    for (std::size_t b = 0; b < p.dim(0); ++b)
      for (std::size_t c = 0; c < p.dim(1); ++c)
        for (std::size_t f = 0; f < p.dim(2); ++f)
          for (std::size_t t = 0; t < p.dim(3); ++t) out.at(b, base + c, f, t) = p.at(b, c, f, t);
    base += p.dim(1);
  }
  return out;
}

struct Layers {
  const model::ParameterSet& ps;
  const ModelConfig& cfg;
  bool train;

  Tensor w(const std::string& p) const { return ps.get(p + ".weight"); }
  Tensor b(const std::string& p) const { return ps.get(p + ".bias"); }
  Tensor bn(const std::string& p, const Tensor& x) const {
    return batch_norm(x, ps.get(p + ".gamma"), ps.get(p + ".beta"), ps.get(p + ".running_mean"),
                      ps.get(p + ".running_var"), cfg.bn_eps, train);
  }
};

// PCEM(z) = V_c(z * P(z) * C(z) + T(z))
//   P(z) = sig(V_c(gelu(N_b(H_DW(z)))))
//   C(z) = sig(W_p gelu(W_r GAP(z)))
//   T(z) = gelu(N_b(V_f(V_t(z))))
inline Tensor pcem(const Layers& L, const std::string& pre, const Tensor& z) {
  const std::size_t C = z.dim(1);
  Tensor P = sigmoid(conv(gelu(L.bn(pre + ".pd.bn", conv(z, L.w(pre + ".pd.dw"), L.b(pre + ".pd.dw"), {1, 1, 1, 1}, C))),
                          L.w(pre + ".pd.pw"), L.b(pre + ".pd.pw"), {}, 1));
  Tensor Cg = sigmoid(conv(gelu(conv(gap(z), L.w(pre + ".ca.reduce"), L.b(pre + ".ca.reduce"), {}, 1)),
                           L.w(pre + ".ca.expand"), L.b(pre + ".ca.expand"), {}, 1));
  Tensor Vt = conv(z, L.w(pre + ".tfc.vt"), L.b(pre + ".tfc.vt"), {1, 1, 0, 0}, 1);
  Tensor Vf = conv(Vt, L.w(pre + ".tfc.vf"), L.b(pre + ".tfc.vf"), {0, 0, 1, 1}, 1);
  Tensor Tz = gelu(L.bn(pre + ".tfc.bn", Vf));
  Tensor inner = add(mul(mul(z, P), Cg), Tz);
  return conv(inner, L.w(pre + ".out"), L.b(pre + ".out"), {}, 1);
}

// FCEM(d) = F({B_i(d)}, {G_j(d)}) * A(d)
//   B_i(d) = gelu(N_b(W^i_{k_i x 1}(d)))            C -> C/kappa2
//   G_j(d) = resize(maxpool_{F_j}(d)) j=1,2; resize(avgpool_{F_3}(d))
//   F(d)   = gelu(N_b(V_c(concat[B_1..B_3, G_1..G_3])))
//   A(d)   = sig(H_DW_f(d)) with a (7,1) depthwise kernel
inline Tensor fcem(const Layers& L, const std::string& pre, const Tensor& d) {
  const std::size_t C = d.dim(1), F = d.dim(2);
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t k = L.cfg.k_list[i];
    const std::string q = pre + ".branch" + std::to_string(i + 1);
    const Padding pad{(k - 1 + 1) / 2, (k - 1) / 2, 0, 0};
    parts.push_back(gelu(L.bn(q + ".bn", conv(d, L.w(q + ".conv"), L.b(q + ".conv"), pad, 1))));
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const std::size_t target = (F * L.cfg.pool_targets[j] + 59) / 60;
    parts.push_back(resize_f(pool_f(d, target, j < 2), F));
  }
  Tensor fused = gelu(L.bn(pre + ".fuse.bn", conv(concat(parts), L.w(pre + ".fuse.conv"), L.b(pre + ".fuse.conv"), {}, 1)));
  const std::size_t ka = L.cfg.afi_kernel;
  Tensor A = sigmoid(conv(d, L.w(pre + ".afi.dw"), L.b(pre + ".afi.dw"), {ka / 2, ka / 2, 0, 0}, C));
  return mul(fused, A);
}

}  // namespace smgaa::literal
