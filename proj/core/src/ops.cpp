#include "dape/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dape/error.hpp"

namespace dape {

FeatureView FeatureView::of(const Shape& shape, ChannelOrder order) {
  if (shape.size() < 2) throw ShapeError("feature tensor needs rank >= 2, got " + shape_str(shape));
  FeatureView v;
  v.order = order;
  v.outer = shape.front();
  if (order == ChannelOrder::kChannelsFirst) {
    v.channels = shape[1];
    v.inner = 1;
    for (std::size_t i = 2; i < shape.size(); ++i) v.inner *= shape[i];
  } else {
    v.channels = shape.back();
    v.inner = 1;
    for (std::size_t i = 1; i + 1 < shape.size(); ++i) v.inner *= shape[i];
  }
  return v;
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_derivative(double r, double delta) {
  if (std::abs(r) <= delta) return r;
  return r > 0 ? delta : -delta;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

namespace {

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

bool wants(const Node& self, std::size_t i) {
  return i < self.parents.size() && self.parents[i] && self.parents[i]->requires_grad;
}

Tensor& gbuf(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
const Tensor& pval(const Node& self, std::size_t i) { return self.parents[i]->value; }

}  // namespace

namespace ops {

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) gbuf(self, 0) += self.grad;
    if (wants(self, 1)) gbuf(self, 1) += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out -= b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) gbuf(self, 0) += self.grad;
    if (wants(self, 1)) gbuf(self, 1) -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& g = self.grad;
    if (wants(self, 0)) {
      Tensor& ga = gbuf(self, 0);
      const Tensor& bv = pval(self, 1);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (wants(self, 1)) {
      Tensor& gb = gbuf(self, 1);
      const Tensor& av = pval(self, 0);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value() * s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& ga = gbuf(self, 0);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += s * self.grad[i];
  });
}

Var scale_channels(const Var& x, const Var& s, ChannelOrder order) {
  const FeatureView v = FeatureView::of(x.shape(), order);
  const bool scalar = s.numel() == 1;
  if (!scalar && s.numel() != v.channels) {
    throw ShapeError("scale_channels: scale has " + std::to_string(s.numel()) +
                     " entries for " + std::to_string(v.channels) + " channels");
  }
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t c = 0; c < v.channels; ++c) {
      const double k = sv[scalar ? 0 : c];
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t idx = v.index(o, c, i);
        out[idx] = xv[idx] * k;
      }
    }
  return make_result(std::move(out), {x, s}, [v, scalar](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& xv = pval(self, 0);
    const Tensor& sv = pval(self, 1);
    Tensor* gx = wants(self, 0) ? &gbuf(self, 0) : nullptr;
    Tensor* gs = wants(self, 1) ? &gbuf(self, 1) : nullptr;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t c = 0; c < v.channels; ++c) {
        const std::size_t sc = scalar ? 0 : c;
        double acc = 0.0;
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t idx = v.index(o, c, i);
          if (gx) (*gx)[idx] += g[idx] * sv[sc];
          acc += g[idx] * xv[idx];
        }
        if (gs) (*gs)[sc] += acc;
      }
  });
}

Var channel_affine(const Var& x, const Var& gamma, const Var& beta, ChannelOrder order) {
  const FeatureView v = FeatureView::of(x.shape(), order);
  const bool has_gamma = gamma.defined();
  const bool has_beta = beta.defined();
  if (has_gamma && gamma.numel() != v.channels) {
    throw ShapeError("channel_affine: gamma has " + std::to_string(gamma.numel()) +
                     " entries for " + std::to_string(v.channels) + " channels");
  }
  if (has_beta && beta.numel() != v.channels) {
    throw ShapeError("channel_affine: beta has " + std::to_string(beta.numel()) +
                     " entries for " + std::to_string(v.channels) + " channels");
  }
  const Tensor& xv = x.value();
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t c = 0; c < v.channels; ++c) {
      const double gm = has_gamma ? gamma.value()[c] : 1.0;
      const double bt = has_beta ? beta.value()[c] : 0.0;
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t idx = v.index(o, c, i);
        out[idx] = has_gamma ? gm * xv[idx] + bt : xv[idx] + bt;
      }
    }
  std::vector<Var> inputs{x, has_gamma ? gamma : Var(), has_beta ? beta : Var()};
  return make_result(std::move(out), inputs, [v, has_gamma](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& xv = pval(self, 0);
    Tensor* gx = wants(self, 0) ? &gbuf(self, 0) : nullptr;
    Tensor* gg = wants(self, 1) ? &gbuf(self, 1) : nullptr;
    Tensor* gb = wants(self, 2) ? &gbuf(self, 2) : nullptr;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t c = 0; c < v.channels; ++c) {
        const double gm = has_gamma ? pval(self, 1)[c] : 1.0;
        double acc_g = 0.0;
        double acc_b = 0.0;
        for (std::size_t i = 0; i < v.inner; ++i) {
          const std::size_t idx = v.index(o, c, i);
          if (gx) (*gx)[idx] += g[idx] * gm;
          acc_g += g[idx] * xv[idx];
          acc_b += g[idx];
        }
        if (gg) (*gg)[c] += acc_g;
        if (gb) (*gb)[c] += acc_b;
      }
  });
}

Var normalize(const Var& x, NormKind kind, std::size_t groups, double eps, ChannelOrder order) {
  const FeatureView v = FeatureView::of(x.shape(), order);
  const Tensor& xv = x.value();
  Tensor out(x.shape());

  // Each statistics set is enumerated as a list of flat indices.
  std::vector<std::vector<std::size_t>> sets;
  if (kind == NormKind::kGroup) {
    if (groups == 0 || v.channels % groups != 0) {
      throw ShapeError("normalize: " + std::to_string(v.channels) +
                       " channels not divisible into " + std::to_string(groups) + " groups");
    }
    const std::size_t cpg = v.channels / groups;
    sets.reserve(v.outer * groups);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t g = 0; g < groups; ++g) {
        std::vector<std::size_t> set;
        set.reserve(cpg * v.inner);
        for (std::size_t c = g * cpg; c < (g + 1) * cpg; ++c)
          for (std::size_t i = 0; i < v.inner; ++i) set.push_back(v.index(o, c, i));
        sets.push_back(std::move(set));
      }
  } else {
    sets.reserve(v.outer * v.inner);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.inner; ++i) {
        std::vector<std::size_t> set(v.channels);
        for (std::size_t c = 0; c < v.channels; ++c) set[c] = v.index(o, c, i);
        sets.push_back(std::move(set));
      }
  }

  std::vector<double> rstd(sets.size());
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& set = sets[k];
    const double n = static_cast<double>(set.size());
    double mu = 0.0;
    for (std::size_t idx : set) mu += xv[idx];
    mu /= n;
    double var = 0.0;
    for (std::size_t idx : set) var += (xv[idx] - mu) * (xv[idx] - mu);
    var /= n;
    rstd[k] = 1.0 / std::sqrt(var + eps);
    for (std::size_t idx : set) out[idx] = (xv[idx] - mu) * rstd[k];
  }

  return make_result(std::move(out), {x}, [sets = std::move(sets), rstd = std::move(rstd)](Node& self) {
    if (!wants(self, 0)) return;
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    Tensor& gx = gbuf(self, 0);
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const auto& set = sets[k];
      const double n = static_cast<double>(set.size());
      double mg = 0.0;
      double mgy = 0.0;
      for (std::size_t idx : set) {
        mg += g[idx];
        mgy += g[idx] * y[idx];
      }
      mg /= n;
      mgy /= n;
      for (std::size_t idx : set) gx[idx] += rstd[k] * (g[idx] - mg - y[idx] * mgy);
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, std::size_t padding, std::size_t groups) {
  if (x.shape().size() != 4 || w.shape().size() != 4) {
    throw ShapeError("conv2d expects x [N,C,H,W] and w [Co,Ci/g,k,k], got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const std::size_t n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
  const std::size_t cout = w.shape()[0], cig = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
  if (groups == 0 || cin % groups || cout % groups || cin / groups != cig) {
    throw ShapeError("conv2d: input channels " + std::to_string(cin) + " incompatible with weight " +
                     shape_str(w.shape()) + " and groups " + std::to_string(groups));
  }
  if (h + 2 * padding < kh || wd + 2 * padding < kw) throw ShapeError("conv2d: kernel larger than input");
  if (bias.defined() && bias.numel() != cout) throw ShapeError("conv2d: bias size mismatch");
  const std::size_t ho = h + 2 * padding - kh + 1, wo = wd + 2 * padding - kw + 1;
  const std::size_t cog = cout / groups;
  const long p = static_cast<long>(padding);

  struct Geometry {
    std::size_t n, cin, h, w, cout, cig, cog, kh, kw, ho, wo, groups;
    long p;
  } geo{n, cin, h, wd, cout, cig, cog, kh, kw, ho, wo, groups, p};

  // Visits every (input index, weight index, output index) triple once.
  auto for_each_tap = [](const Geometry& gm, auto&& fn) {
    for (std::size_t b = 0; b < gm.n; ++b)
      for (std::size_t g = 0; g < gm.groups; ++g)
        for (std::size_t col = 0; col < gm.cog; ++col) {
          const std::size_t co = g * gm.cog + col;
          const std::size_t out_base = (b * gm.cout + co) * gm.ho * gm.wo;
          for (std::size_t cil = 0; cil < gm.cig; ++cil) {
            const std::size_t ci = g * gm.cig + cil;
            const std::size_t in_base = (b * gm.cin + ci) * gm.h * gm.w;
            for (std::size_t ky = 0; ky < gm.kh; ++ky)
              for (std::size_t kx = 0; kx < gm.kw; ++kx) {
                const std::size_t widx = ((co * gm.cig + cil) * gm.kh + ky) * gm.kw + kx;
                const long ox_lo = std::max(0L, gm.p - static_cast<long>(kx));
                const long ox_hi = std::min(static_cast<long>(gm.wo),
                                            static_cast<long>(gm.w) + gm.p - static_cast<long>(kx));
                for (std::size_t oy = 0; oy < gm.ho; ++oy) {
                  const long iy = static_cast<long>(oy + ky) - gm.p;
                  if (iy < 0 || iy >= static_cast<long>(gm.h)) continue;
                  const std::size_t orow = out_base + oy * gm.wo;
                  const std::size_t irow = in_base + static_cast<std::size_t>(iy) * gm.w;
                  fn(irow, orow, widx, ox_lo, ox_hi, static_cast<long>(kx) - gm.p);
                }
              }
          }
        }
  };

  Tensor out({n, cout, ho, wo});
  if (bias.defined()) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t co = 0; co < cout; ++co)
        std::fill_n(out.raw() + (b * cout + co) * ho * wo, ho * wo, bias.value()[co]);
  }
  {
    const double* xv = x.value().raw();
    const double* wv = w.value().raw();
    double* ov = out.raw();
    for_each_tap(geo, [&](std::size_t irow, std::size_t orow, std::size_t widx, long lo, long hi, long shift) {
      const double k = wv[widx];
      for (long ox = lo; ox < hi; ++ox) ov[orow + ox] += k * xv[irow + ox + shift];
    });
  }

  std::vector<Var> inputs{x, w, bias.defined() ? bias : Var()};
  return make_result(std::move(out), inputs, [geo, for_each_tap](Node& self) {
    const double* g = self.grad.raw();
    const bool gx_on = wants(self, 0), gw_on = wants(self, 1), gb_on = wants(self, 2);
    if (gx_on || gw_on) {
      const double* xv = pval(self, 0).raw();
      const double* wv = pval(self, 1).raw();
      double* gx = gx_on ? gbuf(self, 0).raw() : nullptr;
      double* gw = gw_on ? gbuf(self, 1).raw() : nullptr;
      for_each_tap(geo, [&](std::size_t irow, std::size_t orow, std::size_t widx, long lo, long hi, long shift) {
        if (gx) {
          const double k = wv[widx];
          for (long ox = lo; ox < hi; ++ox) gx[irow + ox + shift] += k * g[orow + ox];
        }
        if (gw) {
          double acc = 0.0;
          for (long ox = lo; ox < hi; ++ox) acc += g[orow + ox] * xv[irow + ox + shift];
          gw[widx] += acc;
        }
      });
    }
    if (gb_on) {
      Tensor& gb = gbuf(self, 2);
      for (std::size_t b = 0; b < geo.n; ++b)
        for (std::size_t co = 0; co < geo.cout; ++co) {
          const double* row = g + (b * geo.cout + co) * geo.ho * geo.wo;
          double acc = 0.0;
          for (std::size_t i = 0; i < geo.ho * geo.wo; ++i) acc += row[i];
          gb[co] += acc;
        }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  if (w.shape().size() != 2) throw ShapeError("linear: weight must be [O, K], got " + shape_str(w.shape()));
  const std::size_t out_dim = w.shape()[0], k = w.shape()[1];
  if (x.shape().empty() || x.shape().back() != k) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  }
  if (bias.defined() && bias.numel() != out_dim) throw ShapeError("linear: bias size mismatch");
  const std::size_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor out(out_shape);
  const double* xv = x.value().raw();
  const double* wv = w.value().raw();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias.defined() ? bias.value()[o] : 0.0;
      const double* xr = xv + r * k;
      const double* wr = wv + o * k;
      for (std::size_t j = 0; j < k; ++j) acc += xr[j] * wr[j];
      out[r * out_dim + o] = acc;
    }
  std::vector<Var> inputs{x, w, bias.defined() ? bias : Var()};
  return make_result(std::move(out), inputs, [m, k, out_dim](Node& self) {
    const double* g = self.grad.raw();
    const double* xv = pval(self, 0).raw();
    const double* wv = pval(self, 1).raw();
    if (wants(self, 0)) {
      double* gx = gbuf(self, 0).raw();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[r * out_dim + o];
          const double* wr = wv + o * k;
          double* gxr = gx + r * k;
          for (std::size_t j = 0; j < k; ++j) gxr[j] += go * wr[j];
        }
    }
    if (wants(self, 1)) {
      double* gw = gbuf(self, 1).raw();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          const double go = g[r * out_dim + o];
          const double* xr = xv + r * k;
          double* gwr = gw + o * k;
          for (std::size_t j = 0; j < k; ++j) gwr[j] += go * xr[j];
        }
    }
    if (wants(self, 2)) {
      double* gb = gbuf(self, 2).raw();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
    }
  });
}

Var silu(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * sigmoid(x.value()[i]);
  return make_result(std::move(out), {x}, [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& gx = gbuf(self, 0);
    const Tensor& xv = pval(self, 0);
    for (std::size_t i = 0; i < gx.numel(); ++i) {
      const double s = sigmoid(xv[i]);
      gx[i] += self.grad[i] * (s + xv[i] * s * (1.0 - s));
    }
  });
}

Var gelu(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = gelu_value(x.value()[i]);
  return make_result(std::move(out), {x}, [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& gx = gbuf(self, 0);
    const Tensor& xv = pval(self, 0);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i] * gelu_grad(xv[i]);
  });
}

Var activate(const Var& x, Activation act) {
  switch (act) {
    case Activation::kGelu: return gelu(x);
    case Activation::kSilu: return silu(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& gx = gbuf(self, 0);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
  });
}

namespace {

// Maps each output flat index to its input flat index.
std::vector<std::size_t> permutation_table(const Shape& in, const std::vector<std::size_t>& perm) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(rank);
  std::vector<std::size_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[perm[i]];
    strides[i] = in_strides[perm[i]];
  }
  const std::size_t total = shape_numel(in);
  std::vector<std::size_t> table(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    table[flat] = src;
    for (std::size_t a = rank; a-- > 0;) {
      ++idx[a];
      src += strides[a];
      if (idx[a] < out_shape[a]) break;
      src -= strides[a] * idx[a];
      idx[a] = 0;
    }
  }
  return table;
}

}  // namespace

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  if (perm.size() != in.size()) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_shape[i] = in[perm[i]];
  auto table = permutation_table(in, perm);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < table.size(); ++i) out[i] = x.value()[table[i]];
  return make_result(std::move(out), {x}, [table = std::move(table)](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& gx = gbuf(self, 0);
    for (std::size_t i = 0; i < table.size(); ++i) gx[table[i]] += self.grad[i];
  });
}

Var bmm(const Var& a, const Var& b, bool transpose_b) {
  if (a.shape().size() != 3 || b.shape().size() != 3 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError("bmm: expected [B,M,K] and [B,K,N], got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  if ((transpose_b ? b.shape()[2] : b.shape()[1]) != k) {
    throw ShapeError("bmm: inner dimensions differ: " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  Tensor out({batch, m, n});
  const double* av = a.value().raw();
  const double* bv = b.value().raw();
  double* ov = out.raw();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* ab = av + bi * m * k;
    const double* bb = bv + bi * k * n;
    double* ob = ov + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t l = 0; l < k; ++l) acc += ab[i * k + l] * bb[j * k + l];
          ob[i * n + j] = acc;
        }
      } else {
        for (std::size_t l = 0; l < k; ++l) {
          const double s = ab[i * k + l];
          for (std::size_t j = 0; j < n; ++j) ob[i * n + j] += s * bb[l * n + j];
        }
      }
    }
  }
  return make_result(std::move(out), {a, b}, [batch, m, k, n, transpose_b](Node& self) {
    const double* g = self.grad.raw();
    const double* av = pval(self, 0).raw();
    const double* bv = pval(self, 1).raw();
    double* ga = wants(self, 0) ? gbuf(self, 0).raw() : nullptr;
    double* gb = wants(self, 1) ? gbuf(self, 1).raw() : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double* ab = av + bi * m * k;
      const double* bb = bv + bi * k * n;
      const double* gob = g + bi * m * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double go = gob[i * n + j];
          if (go == 0.0) continue;
          if (transpose_b) {
            if (ga) for (std::size_t l = 0; l < k; ++l) ga[bi * m * k + i * k + l] += go * bb[j * k + l];
            if (gb) for (std::size_t l = 0; l < k; ++l) gb[bi * k * n + j * k + l] += go * ab[i * k + l];
          } else {
            if (ga) for (std::size_t l = 0; l < k; ++l) ga[bi * m * k + i * k + l] += go * bb[l * n + j];
            if (gb) for (std::size_t l = 0; l < k; ++l) gb[bi * k * n + l * n + j] += go * ab[i * k + l];
          }
        }
    }
  });
}

Var softmax_lastdim(const Var& x) {
  if (x.shape().empty()) throw ShapeError("softmax of a rank-0 tensor");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().raw() + r * d;
    double* yr = out.raw() + r * d;
    const double mx = *std::max_element(xr, xr + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < d; ++j) yr[j] /= z;
  }
  return make_result(std::move(out), {x}, [rows, d](Node& self) {
    if (!wants(self, 0)) return;
    double* gx = gbuf(self, 0).raw();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.raw() + r * d;
      const double* g = self.grad.raw() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (g[j] - dot);
    }
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2)) {
    throw ShapeError("concat_channels: incompatible " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t n = sa[0];
  const std::size_t inner = shape_numel(Shape(sa.begin() + 2, sa.end()));
  const std::size_t ca = sa[1] * inner, cb = sb[1] * inner;
  Shape out_shape = sa;
  out_shape[1] = sa[1] + sb[1];
  Tensor out(out_shape);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().raw() + i * ca, ca, out.raw() + i * (ca + cb));
    std::copy_n(b.value().raw() + i * cb, cb, out.raw() + i * (ca + cb) + ca);
  }
  return make_result(std::move(out), {a, b}, [n, ca, cb](Node& self) {
    const double* g = self.grad.raw();
    if (wants(self, 0)) {
      double* ga = gbuf(self, 0).raw();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
    }
    if (wants(self, 1)) {
      double* gb = gbuf(self, 1).raw();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
    }
  });
}

Var repeat_batch(const Var& x, std::size_t batch) {
  Shape out_shape{batch};
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t per = x.numel();
  Tensor out(out_shape);
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(x.value().raw(), per, out.raw() + b * per);
  return make_result(std::move(out), {x}, [batch, per](Node& self) {
    if (!wants(self, 0)) return;
    double* gx = gbuf(self, 0).raw();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < per; ++i) gx[i] += self.grad[b * per + i];
  });
}

Var huber_mean(const Var& residual, double delta) {
  if (!(delta > 0.0)) throw ValidationError("huber delta must be positive");
  const Tensor& r = residual.value();
  if (r.empty()) throw ShapeError("huber of an empty tensor");
  double acc = 0.0;
  for (double v : r.data()) acc += huber(v, delta);
  const double n = static_cast<double>(r.numel());
  return make_result(Tensor::scalar(acc / n), {residual}, [delta, n](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = gbuf(self, 0);
    const Tensor& r = pval(self, 0);
    const double up = self.grad[0] / n;
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += up * huber_derivative(r[i], delta);
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return make_result(Tensor::scalar(acc), {x}, [](Node& self) {
    if (!wants(self, 0)) return;
    Tensor& g = gbuf(self, 0);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace ops
}  // namespace dape
