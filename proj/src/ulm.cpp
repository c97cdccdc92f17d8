#include "lamnet/ulm.hpp"

#include <stdexcept>

namespace lamnet {

CsmParams CsmParams::init(int64_t channels, int64_t hidden, bool bias, DType dtype,
                          std::mt19937_64& rng) {
  if (channels <= 0 || hidden <= 0)
    throw std::invalid_argument("CsmParams: channels and hidden must be positive");
  CsmParams p;
  p.sqz = make_conv(channels, hidden, 1, 1, 1, bias, dtype, rng);
  p.exp = make_conv(hidden, channels, 1, 1, 1, bias, dtype, rng);
  return p;
}

std::vector<NamedParam> CsmParams::named_params(const std::string& prefix) const {
  std::vector<NamedParam> out;
  append_conv_params(out, prefix + ".sqz", sqz);
  append_conv_params(out, prefix + ".exp", exp);
  return out;
}

Tensor csm_forward(const Tensor& x, const CsmParams& p) {
  return conv2d(relu(conv2d(x, p.sqz)), p.exp);
}

IemResult iem_exchange_full(const Tensor& xs, const Tensor& xc) {
  if (!(xs.shape() == xc.shape()))
    throw std::invalid_argument("iem_exchange: branch shapes differ, " + to_string(xs.shape()) +
                                " vs " + to_string(xc.shape()));
  if (xs.dtype() != xc.dtype()) throw std::invalid_argument("iem_exchange: dtype mismatch");
  const Shape4 s = xs.shape();
  const int64_t C = s.c, plane = s.h * s.w;
  const double inv_plane = 1.0 / static_cast<double>(plane);
  const double inv_c = 1.0 / static_cast<double>(C);

  bool rg = xs.requires_grad() || xc.requires_grad();
  IemResult res;
  res.ys = Tensor::zeros(s, xs.dtype(), rg);
  res.yc = Tensor::zeros(s, xs.dtype(), rg);
  res.alpha = Tensor::zeros({s.n, C, 1, 1}, DType::f64);
  res.beta = Tensor::zeros({s.n, 1, s.h, s.w}, DType::f64);

  // Saved for backward: per-batch q (plane), r (C), alpha (C), beta (plane).
  auto saved = std::make_shared<std::vector<double>>(
      static_cast<size_t>(s.n * (2 * plane + 2 * C)));
  for (int64_t n = 0; n < s.n; ++n) {
    double* q = saved->data() + n * (2 * plane + 2 * C);
    double* beta = q + plane;
    double* r = beta + plane;
    double* alpha = r + C;
    std::fill(q, q + plane, 0.0);
    const double* xsb = xs.data() + n * C * plane;
    const double* xcb = xc.data() + n * C * plane;
    for (int64_t c = 0; c < C; ++c) {
      const double* xcr = xcb + c * plane;
      for (int64_t p = 0; p < plane; ++p) q[p] += xcr[p];
    }
    for (int64_t c = 0; c < C; ++c) {
      const double* xsr = xsb + c * plane;
      double dot = 0.0, rsum = 0.0;
      for (int64_t p = 0; p < plane; ++p) {
        dot += q[p] * xsr[p];
        rsum += xsr[p];
      }
      alpha[c] = sigmoid_scalar(dot * inv_plane);
      r[c] = rsum;
      double* ysr = res.ys.data() + (n * C + c) * plane;
      for (int64_t p = 0; p < plane; ++p) ysr[p] = alpha[c] * xsr[p];
      res.alpha.data()[n * C + c] = alpha[c];
    }
    std::fill(beta, beta + plane, 0.0);
    for (int64_t c = 0; c < C; ++c) {
      const double* xcr = xcb + c * plane;
      const double rc = r[c];
      for (int64_t p = 0; p < plane; ++p) beta[p] += rc * xcr[p];
    }
    for (int64_t p = 0; p < plane; ++p) {
      beta[p] = sigmoid_scalar(beta[p] * inv_c);
      res.beta.data()[n * plane + p] = beta[p];
    }
    for (int64_t c = 0; c < C; ++c) {
      const double* xcr = xcb + c * plane;
      double* ycr = res.yc.data() + (n * C + c) * plane;
      for (int64_t p = 0; p < plane; ++p) ycr[p] = beta[p] * xcr[p];
    }
  }
  res.ys.quantize();
  res.yc.quantize();

  auto xsi = xs.impl(), xci = xc.impl(), ysi = res.ys.impl(), yci = res.yc.impl();
  if (Tape* t = Tape::active(); t && rg) {
    t->record({ysi, yci}, [xsi, xci, ysi, yci, saved, C, plane, inv_plane, inv_c] {
      const bool has_gys = !ysi->grad.empty(), has_gyc = !yci->grad.empty();
      if (!has_gys && !has_gyc) return;
      const Shape4 s = xsi->shape;
      const bool need_ds = xsi->requires_grad, need_dc = xci->requires_grad;
      if (need_ds) xsi->ensure_grad();
      if (need_dc) xci->ensure_grad();
      if (!need_ds && !need_dc) return;
      std::vector<double> du(static_cast<size_t>(C));   // d(loss)/d(pre-sigmoid alpha)
      std::vector<double> dv(static_cast<size_t>(plane));  // d(loss)/d(pre-sigmoid beta)
      std::vector<double> dq(static_cast<size_t>(plane)), dr(static_cast<size_t>(C));
      for (int64_t n = 0; n < s.n; ++n) {
        const double* q = saved->data() + n * (2 * plane + 2 * C);
        const double* beta = q + plane;
        const double* r = beta + plane;
        const double* alpha = r + C;
        const double* xsb = xsi->data.data() + n * C * plane;
        const double* xcb = xci->data.data() + n * C * plane;
        const double* gysb = has_gys ? ysi->grad.data() + n * C * plane : nullptr;
        const double* gycb = has_gyc ? yci->grad.data() + n * C * plane : nullptr;

        for (int64_t c = 0; c < C; ++c) {
          double dalpha = 0.0;
          if (has_gys) {
            const double* gys = gysb + c * plane;
            const double* xsr = xsb + c * plane;
            for (int64_t p = 0; p < plane; ++p) dalpha += gys[p] * xsr[p];
          }
          du[static_cast<size_t>(c)] = dalpha * alpha[c] * (1.0 - alpha[c]) * inv_plane;
        }
        std::fill(dv.begin(), dv.end(), 0.0);
        if (has_gyc)
          for (int64_t c = 0; c < C; ++c) {
            const double* gyc = gycb + c * plane;
            const double* xcr = xcb + c * plane;
            for (int64_t p = 0; p < plane; ++p) dv[static_cast<size_t>(p)] += gyc[p] * xcr[p];
          }
        for (int64_t p = 0; p < plane; ++p)
          dv[static_cast<size_t>(p)] *= beta[p] * (1.0 - beta[p]) * inv_c;

        // dq[p] = sum_c du_c * xs[c,p];  dr[c] = sum_p dv_p * xc[c,p]
        std::fill(dq.begin(), dq.end(), 0.0);
        for (int64_t c = 0; c < C; ++c) {
          const double* xsr = xsb + c * plane;
          const double duc = du[static_cast<size_t>(c)];
          for (int64_t p = 0; p < plane; ++p) dq[static_cast<size_t>(p)] += duc * xsr[p];
        }
        for (int64_t c = 0; c < C; ++c) {
          const double* xcr = xcb + c * plane;
          double acc = 0.0;
          for (int64_t p = 0; p < plane; ++p) acc += dv[static_cast<size_t>(p)] * xcr[p];
          dr[static_cast<size_t>(c)] = acc;
        }

        if (need_ds)
          for (int64_t c = 0; c < C; ++c) {
            double* dxs = xsi->grad.data() + (n * C + c) * plane;
            const double* gys = has_gys ? gysb + c * plane : nullptr;
            const double duc = du[static_cast<size_t>(c)];
            const double drc = dr[static_cast<size_t>(c)];
            const double ac = alpha[c];
            for (int64_t p = 0; p < plane; ++p) {
              double v = duc * q[p] + drc;
              if (gys) v += ac * gys[p];
              dxs[p] += v;
            }
          }
        if (need_dc)
          for (int64_t c = 0; c < C; ++c) {
            double* dxc = xci->grad.data() + (n * C + c) * plane;
            const double* gyc = has_gyc ? gycb + c * plane : nullptr;
            const double rc = r[c];
            for (int64_t p = 0; p < plane; ++p) {
              double v = dv[static_cast<size_t>(p)] * rc + dq[static_cast<size_t>(p)];
              if (gyc) v += beta[p] * gyc[p];
              dxc[p] += v;
            }
          }
      }
    });
  }
  return res;
}

std::pair<Tensor, Tensor> iem_exchange(const Tensor& xs, const Tensor& xc) {
  IemResult r = iem_exchange_full(xs, xc);
  return {r.ys, r.yc};
}

UlmParams UlmParams::init(int64_t channels, int64_t groups, const FocalSpec& spec,
                          int64_t csm_hidden, bool softmax_weights, bool bias, DType dtype,
                          std::mt19937_64& rng) {
  if (channels <= 0 || channels % 2 != 0)
    throw std::invalid_argument("UlmParams: channels must be even");
  const int64_t half = channels / 2;
  if (half % groups != 0)
    throw std::invalid_argument("UlmParams: branch width C/2 = " + std::to_string(half) +
                                " must be divisible by groups");
  UlmParams p;
  p.in_proj = make_conv(channels, channels, 1, 1, 1, bias, dtype, rng);
  p.spatial = LsamParams::init(half, groups, spec, softmax_weights, bias, dtype, rng);
  p.csm = CsmParams::init(half, csm_hidden, bias, dtype, rng);
  p.out_proj = make_conv(channels, channels, 1, 1, 1, bias, dtype, rng);
  return p;
}

std::vector<NamedParam> UlmParams::named_params(const std::string& prefix) const {
  std::vector<NamedParam> out;
  append_conv_params(out, prefix + ".in_proj", in_proj);
  for (NamedParam& np : spatial.named_params(prefix + ".lsam")) out.push_back(std::move(np));
  for (NamedParam& np : csm.named_params(prefix + ".csm")) out.push_back(std::move(np));
  append_conv_params(out, prefix + ".out_proj", out_proj);
  return out;
}

Tensor ulm_forward(const Tensor& x, const UlmParams& p) {
  const int64_t C = x.shape().c;
  if (C != p.in_proj.in_channels())
    throw std::invalid_argument("ulm_forward: input has " + std::to_string(C) +
                                " channels, params expect " +
                                std::to_string(p.in_proj.in_channels()));
  Tensor proj = conv2d(x, p.in_proj);
  Tensor xs = slice_channels(proj, 0, C / 2);
  Tensor xc = slice_channels(proj, C / 2, C);
  Tensor spatial = lsam_forward(xs, p.spatial);
  Tensor channel = csm_forward(xc, p.csm);
  auto [ys, yc] = iem_exchange(spatial, channel);
  return conv2d(concat_channels(ys, yc), p.out_proj);
}

}  // namespace lamnet
