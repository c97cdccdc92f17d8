#include "lamnet/nn_ops.hpp"

#include <cmath>
#include <stdexcept>

namespace lamnet {

ConvParams make_conv(int64_t c_in, int64_t c_out, int64_t kh, int64_t kw, int64_t groups,
                     bool bias, DType dtype, std::mt19937_64& rng) {
  if (groups <= 0 || c_in % groups != 0 || c_out % groups != 0)
    throw std::invalid_argument("make_conv: channels not divisible by groups");
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("make_conv: kernel extents must be odd");
  ConvParams p;
  p.groups = groups;
  p.weight = Tensor::zeros({c_out, c_in / groups, kh, kw}, dtype, true);
  const double fan_in = static_cast<double>((c_in / groups) * kh * kw);
  const double bound = std::sqrt(6.0 / fan_in);
  fill_uniform(p.weight, rng, -bound, bound);
  if (bias) p.bias = Tensor::zeros({1, c_out, 1, 1}, dtype, true);
  return p;
}

namespace {

void validate_conv(const Tensor& x, const ConvParams& p) {
  const Shape4 ws = p.weight.shape();
  if (x.shape().c != ws.c * p.groups)
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.shape().c) +
                                " channels, weight expects " + std::to_string(ws.c * p.groups));
  if (ws.n % p.groups != 0)
    throw std::invalid_argument("conv2d: out channels not divisible by groups");
  if (ws.h % 2 == 0 || ws.w % 2 == 0)
    throw std::invalid_argument("conv2d: kernel extents must be odd");
  if (p.has_bias() && !(p.bias.shape() == Shape4{1, ws.n, 1, 1}))
    throw std::invalid_argument("conv2d: bias shape must be (1,C_out,1,1)");
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  validate_conv(x, p);
  const Shape4 in = x.shape();
  const Shape4 ws = p.weight.shape();
  const int64_t G = p.groups;
  const int64_t cin_g = ws.c, cout = ws.n, cout_g = cout / G;
  const int64_t kh = ws.h, kw = ws.w, ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const int64_t H = in.h, W = in.w;

  bool rg = x.requires_grad() || p.weight.requires_grad() ||
            (p.has_bias() && p.bias.requires_grad());
  Tensor y = Tensor::zeros({in.n, cout, H, W}, x.dtype(), rg);

  const double* px = x.data();
  const double* pwt = p.weight.data();
  double* py = y.data();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t co = 0; co < cout; ++co) {
      double* yplane = py + (n * cout + co) * H * W;
      if (p.has_bias()) {
        const double b = p.bias.data()[co];
        for (int64_t i = 0; i < H * W; ++i) yplane[i] = b;
      }
      const int64_t g = co / cout_g;
      for (int64_t cl = 0; cl < cin_g; ++cl) {
        const double* xplane = px + (n * in.c + g * cin_g + cl) * H * W;
        const double* wrow = pwt + ((co * cin_g + cl) * kh) * kw;
        for (int64_t dy = 0; dy < kh; ++dy)
          for (int64_t dx = 0; dx < kw; ++dx) {
            const double wv = wrow[dy * kw + dx];
            if (wv == 0.0) continue;
            const int64_t sy = dy - ph, sx = dx - pw;
            const int64_t oy0 = std::max<int64_t>(0, -sy), oy1 = std::min(H, H - sy);
            const int64_t ox0 = std::max<int64_t>(0, -sx), ox1 = std::min(W, W - sx);
            for (int64_t oy = oy0; oy < oy1; ++oy) {
              double* yr = yplane + oy * W;
              const double* xr = xplane + (oy + sy) * W + sx;
              for (int64_t ox = ox0; ox < ox1; ++ox) yr[ox] += wv * xr[ox];
            }
          }
      }
    }
  y.quantize();

  auto xi = x.impl(), wi = p.weight.impl(), yi = y.impl();
  auto bi = p.has_bias() ? p.bias.impl() : nullptr;
  if (Tape* t = Tape::active(); t && rg) {
    t->record({yi}, [xi, wi, bi, yi, G] {
      if (yi->grad.empty()) return;
      const Shape4 in = xi->shape, ws = wi->shape, os = yi->shape;
      const int64_t cin_g = ws.c, cout = ws.n, cout_g = cout / G;
      const int64_t kh = ws.h, kw = ws.w, ph = (kh - 1) / 2, pw = (kw - 1) / 2;
      const int64_t H = in.h, W = in.w;
      const double* gy = yi->grad.data();
      if (bi && bi->requires_grad) {
        bi->ensure_grad();
        for (int64_t n = 0; n < in.n; ++n)
          for (int64_t co = 0; co < cout; ++co) {
            const double* gplane = gy + (n * cout + co) * H * W;
            double s = 0.0;
            for (int64_t i = 0; i < H * W; ++i) s += gplane[i];
            bi->grad[co] += s;
          }
      }
      const bool need_dx = xi->requires_grad;
      const bool need_dw = wi->requires_grad;
      if (need_dx) xi->ensure_grad();
      if (need_dw) wi->ensure_grad();
      if (!need_dx && !need_dw) return;
      for (int64_t n = 0; n < in.n; ++n)
        for (int64_t co = 0; co < cout; ++co) {
          const double* gplane = gy + (n * cout + co) * H * W;
          const int64_t g = co / cout_g;
          for (int64_t cl = 0; cl < cin_g; ++cl) {
            const int64_t ci = g * cin_g + cl;
            const double* xplane = xi->data.data() + (n * in.c + ci) * H * W;
            double* dxplane = need_dx ? xi->grad.data() + (n * in.c + ci) * H * W : nullptr;
            for (int64_t dy = 0; dy < kh; ++dy)
              for (int64_t dx = 0; dx < kw; ++dx) {
                const int64_t widx = ((co * cin_g + cl) * kh + dy) * kw + dx;
                const int64_t sy = dy - ph, sx = dx - pw;
                const int64_t oy0 = std::max<int64_t>(0, -sy), oy1 = std::min(H, H - sy);
                const int64_t ox0 = std::max<int64_t>(0, -sx), ox1 = std::min(W, W - sx);
                double wacc = 0.0;
                const double wv = wi->data[widx];
                for (int64_t oy = oy0; oy < oy1; ++oy) {
                  const double* gr = gplane + oy * W;
                  const double* xr = xplane + (oy + sy) * W + sx;
                  if (need_dw)
                    for (int64_t ox = ox0; ox < ox1; ++ox) wacc += gr[ox] * xr[ox];
                  if (need_dx && wv != 0.0) {
                    double* dxr = dxplane + (oy + sy) * W + sx;
                    for (int64_t ox = ox0; ox < ox1; ++ox) dxr[ox] += wv * gr[ox];
                  }
                }
                if (need_dw) wi->grad[widx] += wacc;
              }
          }
        }
    });
  }
  return y;
}

Tensor dwconv1d(const Tensor& x, const ConvParams& p, Axis axis) {
  if (axis != Axis::H && axis != Axis::W)
    throw std::invalid_argument("dwconv1d: axis must be H or W");
  const Shape4 in = x.shape();
  const Shape4 ws = p.weight.shape();
  if (!(ws.c == 1 && ws.h == 1) || ws.n != in.c || p.groups != in.c)
    throw std::invalid_argument("dwconv1d: weight must be (C,1,1,K) depthwise, got " +
                                to_string(ws) + " for C=" + std::to_string(in.c));
  const int64_t K = ws.w;
  if (K % 2 == 0) throw std::invalid_argument("dwconv1d: kernel length must be odd");
  if (p.has_bias() && !(p.bias.shape() == Shape4{1, in.c, 1, 1}))
    throw std::invalid_argument("dwconv1d: bias shape must be (1,C,1,1)");
  const int64_t pad = (K - 1) / 2;
  const int64_t H = in.h, W = in.w;
  const bool along_w = axis == Axis::W;

  bool rg = x.requires_grad() || p.weight.requires_grad() ||
            (p.has_bias() && p.bias.requires_grad());
  Tensor y = Tensor::zeros(in, x.dtype(), rg);
  const double* px = x.data();
  double* py = y.data();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c) {
      const double* xplane = px + (n * in.c + c) * H * W;
      double* yplane = py + (n * in.c + c) * H * W;
      const double* k = p.weight.data() + c * K;
      const double b = p.has_bias() ? p.bias.data()[c] : 0.0;
      if (b != 0.0)
        for (int64_t i = 0; i < H * W; ++i) yplane[i] = b;
      for (int64_t t = 0; t < K; ++t) {
        const double wv = k[t];
        if (wv == 0.0) continue;
        const int64_t s = t - pad;
        if (along_w) {
          const int64_t x0 = std::max<int64_t>(0, -s), x1 = std::min(W, W - s);
          for (int64_t h = 0; h < H; ++h) {
            double* yr = yplane + h * W;
            const double* xr = xplane + h * W + s;
            for (int64_t w = x0; w < x1; ++w) yr[w] += wv * xr[w];
          }
        } else {
          const int64_t h0 = std::max<int64_t>(0, -s), h1 = std::min(H, H - s);
          for (int64_t h = h0; h < h1; ++h) {
            double* yr = yplane + h * W;
            const double* xr = xplane + (h + s) * W;
            for (int64_t w = 0; w < W; ++w) yr[w] += wv * xr[w];
          }
        }
      }
    }
  y.quantize();

  auto xi = x.impl(), wi = p.weight.impl(), yi = y.impl();
  auto bi = p.has_bias() ? p.bias.impl() : nullptr;
  if (Tape* t = Tape::active(); t && rg) {
    t->record({yi}, [xi, wi, bi, yi, K, pad, along_w] {
      if (yi->grad.empty()) return;
      const Shape4 in = xi->shape;
      const int64_t H = in.h, W = in.w;
      const double* gy = yi->grad.data();
      const bool need_dx = xi->requires_grad, need_dw = wi->requires_grad;
      if (need_dx) xi->ensure_grad();
      if (need_dw) wi->ensure_grad();
      if (bi && bi->requires_grad) bi->ensure_grad();
      for (int64_t n = 0; n < in.n; ++n)
        for (int64_t c = 0; c < in.c; ++c) {
          const double* gplane = gy + (n * in.c + c) * H * W;
          const double* xplane = xi->data.data() + (n * in.c + c) * H * W;
          double* dxplane = need_dx ? xi->grad.data() + (n * in.c + c) * H * W : nullptr;
          if (bi && bi->requires_grad) {
            double s = 0.0;
            for (int64_t i = 0; i < H * W; ++i) s += gplane[i];
            bi->grad[c] += s;
          }
          for (int64_t t = 0; t < K; ++t) {
            const int64_t s = t - pad;
            const double wv = wi->data[c * K + t];
            double wacc = 0.0;
            if (along_w) {
              const int64_t x0 = std::max<int64_t>(0, -s), x1 = std::min(W, W - s);
              for (int64_t h = 0; h < H; ++h) {
                const double* gr = gplane + h * W;
                const double* xr = xplane + h * W + s;
                if (need_dw)
                  for (int64_t w = x0; w < x1; ++w) wacc += gr[w] * xr[w];
                if (need_dx && wv != 0.0) {
                  double* dxr = dxplane + h * W + s;
                  for (int64_t w = x0; w < x1; ++w) dxr[w] += wv * gr[w];
                }
              }
            } else {
              const int64_t h0 = std::max<int64_t>(0, -s), h1 = std::min(H, H - s);
              for (int64_t h = h0; h < h1; ++h) {
                const double* gr = gplane + h * W;
                const double* xr = xplane + (h + s) * W;
                if (need_dw)
                  for (int64_t w = 0; w < W; ++w) wacc += gr[w] * xr[w];
                if (need_dx && wv != 0.0) {
                  double* dxr = dxplane + (h + s) * W;
                  for (int64_t w = 0; w < W; ++w) dxr[w] += wv * gr[w];
                }
              }
            }
            if (need_dw) wi->grad[c * K + t] += wacc;
          }
        }
    });
  }
  return y;
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Shape4 in = x.shape();
  const Shape4 want{1, in.c, 1, 1};
  if (!(gamma.shape() == want) || !(beta.shape() == want))
    throw std::invalid_argument("layer_norm_channels: gamma/beta must be (1,C,1,1)");
  if (eps <= 0) throw std::invalid_argument("layer_norm_channels: eps must be positive");

  const int64_t C = in.c, plane = in.h * in.w;
  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor y = Tensor::zeros(in, x.dtype(), rg);

  // Saved per-position stats for backward: mean and 1/sqrt(var+eps).
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(2 * in.n * plane));
  const double* px = x.data();
  double* py = y.data();
  for (int64_t n = 0; n < in.n; ++n) {
    double* mean = stats->data() + 2 * n * plane;
    double* inv = mean + plane;
    std::fill(mean, mean + plane, 0.0);
    std::fill(inv, inv + plane, 0.0);
    const double* xb = px + n * C * plane;
    for (int64_t c = 0; c < C; ++c) {
      const double* xr = xb + c * plane;
      for (int64_t p = 0; p < plane; ++p) mean[p] += xr[p];
    }
    for (int64_t p = 0; p < plane; ++p) mean[p] /= static_cast<double>(C);
    for (int64_t c = 0; c < C; ++c) {
      const double* xr = xb + c * plane;
      for (int64_t p = 0; p < plane; ++p) {
        double d = xr[p] - mean[p];
        inv[p] += d * d;
      }
    }
    for (int64_t p = 0; p < plane; ++p)
      inv[p] = 1.0 / std::sqrt(inv[p] / static_cast<double>(C) + eps);
    for (int64_t c = 0; c < C; ++c) {
      const double g = gamma.data()[c], b = beta.data()[c];
      const double* xr = xb + c * plane;
      double* yr = py + (n * C + c) * plane;
      for (int64_t p = 0; p < plane; ++p) yr[p] = g * (xr[p] - mean[p]) * inv[p] + b;
    }
  }
  y.quantize();

  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl();
  if (Tape* t = Tape::active(); t && rg) {
    t->record({yi}, [xi, gi, bi, yi, stats, C, plane] {
      if (yi->grad.empty()) return;
      const Shape4 in = xi->shape;
      const bool need_dx = xi->requires_grad;
      if (need_dx) xi->ensure_grad();
      if (gi->requires_grad) gi->ensure_grad();
      if (bi->requires_grad) bi->ensure_grad();
      std::vector<double> mg(plane), mgx(plane);
      for (int64_t n = 0; n < in.n; ++n) {
        const double* mean = stats->data() + 2 * n * plane;
        const double* inv = mean + plane;
        const double* xb = xi->data.data() + n * C * plane;
        const double* gyb = yi->grad.data() + n * C * plane;
        std::fill(mg.begin(), mg.end(), 0.0);
        std::fill(mgx.begin(), mgx.end(), 0.0);
        for (int64_t c = 0; c < C; ++c) {
          const double gam = gi->data[c];
          const double* xr = xb + c * plane;
          const double* gr = gyb + c * plane;
          double dgam = 0.0, dbet = 0.0;
          for (int64_t p = 0; p < plane; ++p) {
            const double xhat = (xr[p] - mean[p]) * inv[p];
            const double g = gr[p] * gam;
            mg[p] += g;
            mgx[p] += g * xhat;
            dgam += gr[p] * xhat;
            dbet += gr[p];
          }
          if (gi->requires_grad) gi->grad[c] += dgam;
          if (bi->requires_grad) bi->grad[c] += dbet;
        }
        if (!need_dx) continue;
        const double invc = 1.0 / static_cast<double>(C);
        for (int64_t p = 0; p < plane; ++p) {
          mg[p] *= invc;
          mgx[p] *= invc;
        }
        for (int64_t c = 0; c < C; ++c) {
          const double gam = gi->data[c];
          const double* xr = xb + c * plane;
          const double* gr = gyb + c * plane;
          double* dxr = xi->grad.data() + (n * C + c) * plane;
          for (int64_t p = 0; p < plane; ++p) {
            const double xhat = (xr[p] - mean[p]) * inv[p];
            dxr[p] += inv[p] * (gr[p] * gam - mg[p] - xhat * mgx[p]);
          }
        }
      }
    });
  }
  return y;
}

namespace {

Tensor shuffle_impl(const Tensor& x, int64_t r, bool inverse) {
  const Shape4 in = x.shape();
  Shape4 out;
  if (!inverse) {
    if (in.c % (r * r) != 0)
      throw std::invalid_argument("pixel_shuffle: C=" + std::to_string(in.c) +
                                  " not divisible by r^2=" + std::to_string(r * r));
    out = {in.n, in.c / (r * r), in.h * r, in.w * r};
  } else {
    if (in.h % r != 0 || in.w % r != 0)
      throw std::invalid_argument("pixel_unshuffle: spatial dims not divisible by r");
    out = {in.n, in.c * r * r, in.h / r, in.w / r};
  }
  Tensor y = Tensor::zeros(out, x.dtype(), x.requires_grad());
  // Index map shared by both directions: logical (n, c, h, w, dy, dx) with
  // packed channel c*r^2 + dy*r + dx on the coarse side.
  const Shape4& coarse = inverse ? out : in;
  const Shape4& fine = inverse ? in : out;
  const int64_t Cb = fine.c;  // base channels
  const double* src = x.data();
  double* dst = y.data();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < Cb; ++c)
      for (int64_t dy = 0; dy < r; ++dy)
        for (int64_t dx = 0; dx < r; ++dx)
          for (int64_t h = 0; h < coarse.h; ++h)
            for (int64_t w = 0; w < coarse.w; ++w) {
              int64_t ci = ((n * coarse.c) + (c * r * r + dy * r + dx)) * coarse.h * coarse.w +
                           h * coarse.w + w;
              int64_t fi = ((n * fine.c) + c) * fine.h * fine.w + (h * r + dy) * fine.w +
                           (w * r + dx);
              if (!inverse) dst[fi] = src[ci];
              else dst[ci] = src[fi];
            }
  auto xi = x.impl(), yi = y.impl();
  if (Tape* t = Tape::active(); t && x.requires_grad()) {
    t->record({yi}, [xi, yi, r, inverse] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      const Shape4 in = xi->shape, out = yi->shape;
      const Shape4& coarse = inverse ? out : in;
      const Shape4& fine = inverse ? in : out;
      const int64_t Cb = fine.c;
      for (int64_t n = 0; n < in.n; ++n)
        for (int64_t c = 0; c < Cb; ++c)
          for (int64_t dy = 0; dy < r; ++dy)
            for (int64_t dx = 0; dx < r; ++dx)
              for (int64_t h = 0; h < coarse.h; ++h)
                for (int64_t w = 0; w < coarse.w; ++w) {
                  int64_t ci = ((n * coarse.c) + (c * r * r + dy * r + dx)) * coarse.h *
                                   coarse.w +
                               h * coarse.w + w;
                  int64_t fi = ((n * fine.c) + c) * fine.h * fine.w + (h * r + dy) * fine.w +
                               (w * r + dx);
                  if (!inverse) xi->grad[ci] += yi->grad[fi];
                  else xi->grad[fi] += yi->grad[ci];
                }
    });
  }
  return y;
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, int64_t r) {
  if (r <= 0) throw std::invalid_argument("pixel_shuffle: r must be positive");
  return shuffle_impl(x, r, false);
}

Tensor pixel_unshuffle(const Tensor& x, int64_t r) {
  if (r <= 0) throw std::invalid_argument("pixel_unshuffle: r must be positive");
  return shuffle_impl(x, r, true);
}

void append_conv_params(std::vector<NamedParam>& out, const std::string& prefix,
                        const ConvParams& p) {
  out.push_back({prefix + ".weight", p.weight, ParamKind::conv_weight});
  if (p.has_bias()) out.push_back({prefix + ".bias", p.bias, ParamKind::conv_bias});
}

int64_t count_trainables(std::span<const NamedParam> params, bool include_bias,
                         bool include_norm) {
  int64_t total = 0;
  for (const NamedParam& p : params) {
    if (p.kind == ParamKind::conv_bias && !include_bias) continue;
    if (p.kind == ParamKind::norm && !include_norm) continue;
    total += p.tensor.numel();
  }
  return total;
}

}  // namespace lamnet
