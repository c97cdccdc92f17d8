#include "lamnet/fsa.hpp"

#include <stdexcept>

namespace lamnet {

void FocalSpec::validate() const {
  if (strides.empty() || strides.size() != steps.size())
    throw std::invalid_argument("FocalSpec: strides and steps must be equal-length, non-empty");
  for (size_t l = 0; l < strides.size(); ++l)
    if (strides[l] <= 0 || steps[l] <= 0)
      throw std::invalid_argument("FocalSpec: strides and steps must be positive");
}

int64_t kernel_len(const FocalSpec& spec) {
  spec.validate();
  int64_t t = 0;
  for (int64_t v : spec.steps) t += v;
  return 1 + 2 * t;
}

int64_t receptive_field(const FocalSpec& spec) {
  spec.validate();
  int64_t span = 0;
  for (size_t l = 0; l < spec.strides.size(); ++l) span += spec.strides[l] * spec.steps[l];
  return 1 + 2 * span;
}

std::vector<SlotRange> slot_ranges(const FocalSpec& spec) {
  const int64_t K = kernel_len(spec);
  const int64_t T = (K - 1) / 2;
  std::vector<SlotRange> slots(static_cast<size_t>(K));
  slots[static_cast<size_t>(T)] = {0, 0, 1.0};
  int64_t base = 1;  // nearest unclaimed positive offset
  int64_t pos = T;
  for (size_t l = 0; l < spec.strides.size(); ++l) {
    const int64_t s = spec.strides[l];
    for (int64_t j = 0; j < spec.steps[l]; ++j) {
      const int64_t off = base + j * s;
      ++pos;
      slots[static_cast<size_t>(pos)] = {off, off + s - 1, 1.0 / static_cast<double>(s)};
      slots[static_cast<size_t>(2 * T - pos)] = {-(off + s - 1), -off,
                                                 1.0 / static_cast<double>(s)};
    }
    base += s * spec.steps[l];
  }
  return slots;
}

FocalAgents focal_agents_full(const Tensor& x, Axis axis, const FocalSpec& spec) {
  if (axis != Axis::H && axis != Axis::W)
    throw std::invalid_argument("focal_agents: axis must be H or W");
  const std::vector<SlotRange> slots = slot_ranges(spec);
  const int64_t K = static_cast<int64_t>(slots.size());
  const Shape4 in = x.shape();
  const int64_t H = in.h, W = in.w;
  const int64_t extent = axis == Axis::W ? W : H;
  const bool along_w = axis == Axis::W;

  FocalAgents out;
  out.window_exceeds_axis = K > 2 * extent + 1;
  Tensor y = Tensor::zeros({in.n, in.c * K, H, W}, x.dtype(), x.requires_grad());

  const double* px = x.data();
  double* py = y.data();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c) {
      const double* xplane = px + (n * in.c + c) * H * W;
      for (int64_t k = 0; k < K; ++k) {
        double* yplane = py + ((n * in.c + c) * K + k) * H * W;
        const SlotRange& sl = slots[static_cast<size_t>(k)];
        for (int64_t d = sl.lo; d <= sl.hi; ++d) {
          if (along_w) {
            const int64_t w0 = std::max<int64_t>(0, -d), w1 = std::min(W, W - d);
            for (int64_t h = 0; h < H; ++h) {
              double* yr = yplane + h * W;
              const double* xr = xplane + h * W + d;
              for (int64_t w = w0; w < w1; ++w) yr[w] += sl.inv_div * xr[w];
            }
          } else {
            const int64_t h0 = std::max<int64_t>(0, -d), h1 = std::min(H, H - d);
            for (int64_t h = h0; h < h1; ++h) {
              double* yr = yplane + h * W;
              const double* xr = xplane + (h + d) * W;
              for (int64_t w = 0; w < W; ++w) yr[w] += sl.inv_div * xr[w];
            }
          }
        }
      }
    }
  y.quantize();

  auto xi = x.impl(), yi = y.impl();
  if (Tape* t = Tape::active(); t && x.requires_grad()) {
    t->record({yi}, [xi, yi, slots, K, along_w] {
      if (yi->grad.empty() || !xi->requires_grad) return;
      xi->ensure_grad();
      const Shape4 in = xi->shape;
      const int64_t H = in.h, W = in.w;
      for (int64_t n = 0; n < in.n; ++n)
        for (int64_t c = 0; c < in.c; ++c) {
          double* dxplane = xi->grad.data() + (n * in.c + c) * H * W;
          for (int64_t k = 0; k < K; ++k) {
            const double* gplane = yi->grad.data() + ((n * in.c + c) * K + k) * H * W;
            const SlotRange& sl = slots[static_cast<size_t>(k)];
            for (int64_t d = sl.lo; d <= sl.hi; ++d) {
              if (along_w) {
                const int64_t w0 = std::max<int64_t>(0, -d), w1 = std::min(W, W - d);
                for (int64_t h = 0; h < H; ++h) {
                  const double* gr = gplane + h * W;
                  double* dxr = dxplane + h * W + d;
                  for (int64_t w = w0; w < w1; ++w) dxr[w] += sl.inv_div * gr[w];
                }
              } else {
                const int64_t h0 = std::max<int64_t>(0, -d), h1 = std::min(H, H - d);
                for (int64_t h = h0; h < h1; ++h) {
                  const double* gr = gplane + h * W;
                  double* dxr = dxplane + (h + d) * W;
                  for (int64_t w = 0; w < W; ++w) dxr[w] += sl.inv_div * gr[w];
                }
              }
            }
          }
        }
    });
  }
  out.agents = y;
  return out;
}

Tensor focal_agents(const Tensor& x, Axis axis, const FocalSpec& spec) {
  return focal_agents_full(x, axis, spec).agents;
}

LsamParams LsamParams::init(int64_t branch_channels, int64_t groups, const FocalSpec& spec,
                            bool softmax_weights, bool bias, DType dtype,
                            std::mt19937_64& rng) {
  spec.validate();
  if (groups <= 0 || branch_channels % groups != 0)
    throw std::invalid_argument("LsamParams: branch channels (" +
                                std::to_string(branch_channels) +
                                ") must be divisible by groups (" + std::to_string(groups) + ")");
  const int64_t K = kernel_len(spec);
  LsamParams p;
  p.groups = groups;
  p.spec = spec;
  p.softmax_weights = softmax_weights;
  for (AxisWeightGen* gen : {&p.h_gen, &p.v_gen}) {
    gen->dw = make_conv(branch_channels, branch_channels, 1, K, branch_channels, bias, dtype, rng);
    gen->pw = make_conv(branch_channels, groups * K, 1, 1, 1, bias, dtype, rng);
    // The generated weights multiply the value branch, so activation variance
    // multiplies instead of adding; fan-in scaling here makes each stacked
    // mixer blow up quadratically.  Start the generator head near zero
    // (std 0.02, the usual dynamic-weight convention) so aggregation begins
    // gentle and the scale is learned.
    fill_normal(gen->pw.weight, rng, 0.0, 0.02);
  }
  return p;
}

std::vector<NamedParam> LsamParams::named_params(const std::string& prefix) const {
  std::vector<NamedParam> out;
  append_conv_params(out, prefix + ".h.dw", h_gen.dw);
  append_conv_params(out, prefix + ".h.pw", h_gen.pw);
  append_conv_params(out, prefix + ".v.dw", v_gen.dw);
  append_conv_params(out, prefix + ".v.pw", v_gen.pw);
  return out;
}

Tensor gen_dynamic_weights(const Tensor& x, Axis axis, const AxisWeightGen& gen,
                           const FocalSpec& spec, int64_t groups, bool softmax_weights) {
  const int64_t K = kernel_len(spec);
  if (gen.dw.weight.shape().w != K)
    throw std::invalid_argument("gen_dynamic_weights: depthwise kernel length " +
                                std::to_string(gen.dw.weight.shape().w) + " != K = " +
                                std::to_string(K));
  if (gen.pw.out_channels() != groups * K)
    throw std::invalid_argument("gen_dynamic_weights: pointwise conv must emit G*K channels");
  Tensor w = conv2d(dwconv1d(x, gen.dw, axis), gen.pw);
  if (softmax_weights) w = softmax_groups(w, groups, K);
  return w;
}

Tensor fsa_apply(const Tensor& agents, const Tensor& weights, int64_t groups) {
  const Shape4 as = agents.shape(), ws = weights.shape();
  if (as.n != ws.n || as.h != ws.h || as.w != ws.w)
    throw std::invalid_argument("fsa_apply: agents/weights layout mismatch, " + to_string(as) +
                                " vs " + to_string(ws));
  if (groups <= 0 || ws.c % groups != 0)
    throw std::invalid_argument("fsa_apply: weight channels not divisible by groups");
  const int64_t K = ws.c / groups;
  if (as.c % K != 0)
    throw std::invalid_argument("fsa_apply: agent channels not divisible by K=" +
                                std::to_string(K));
  const int64_t C = as.c / K;
  if (C % groups != 0)
    throw std::invalid_argument("fsa_apply: branch channels (" + std::to_string(C) +
                                ") not divisible by groups (" + std::to_string(groups) + ")");
  if (agents.dtype() != weights.dtype())
    throw std::invalid_argument("fsa_apply: dtype mismatch");
  const int64_t plane = as.h * as.w;
  const int64_t cpg = C / groups;

  bool rg = agents.requires_grad() || weights.requires_grad();
  Tensor y = Tensor::zeros({as.n, C, as.h, as.w}, agents.dtype(), rg);
  const double* pa = agents.data();
  const double* pw = weights.data();
  double* py = y.data();
  for (int64_t n = 0; n < as.n; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t g = c / cpg;
      double* yplane = py + (n * C + c) * plane;
      for (int64_t k = 0; k < K; ++k) {
        const double* ap = pa + ((n * C + c) * K + k) * plane;
        const double* wp = pw + (n * groups * K + g * K + k) * plane;
        for (int64_t p = 0; p < plane; ++p) yplane[p] += wp[p] * ap[p];
      }
    }
  y.quantize();

  auto ai = agents.impl(), wi = weights.impl(), yi = y.impl();
  if (Tape* t = Tape::active(); t && rg) {
    t->record({yi}, [ai, wi, yi, groups, K, C, cpg, plane] {
      if (yi->grad.empty()) return;
      const Shape4 as = ai->shape;
      const bool need_da = ai->requires_grad, need_dw = wi->requires_grad;
      if (need_da) ai->ensure_grad();
      if (need_dw) wi->ensure_grad();
      if (!need_da && !need_dw) return;
      for (int64_t n = 0; n < as.n; ++n)
        for (int64_t c = 0; c < C; ++c) {
          const int64_t g = c / cpg;
          const double* gy = yi->grad.data() + (n * C + c) * plane;
          for (int64_t k = 0; k < K; ++k) {
            const int64_t aoff = ((n * C + c) * K + k) * plane;
            const int64_t woff = (n * groups * K + g * K + k) * plane;
            if (need_da) {
              double* da = ai->grad.data() + aoff;
              const double* wp = wi->data.data() + woff;
              for (int64_t p = 0; p < plane; ++p) da[p] += wp[p] * gy[p];
            }
            if (need_dw) {
              double* dw = wi->grad.data() + woff;
              const double* ap = ai->data.data() + aoff;
              for (int64_t p = 0; p < plane; ++p) dw[p] += ap[p] * gy[p];
            }
          }
        }
    });
  }
  return y;
}

Tensor lsam_forward(const Tensor& x, const LsamParams& p) {
  if (x.shape().c % p.groups != 0)
    throw std::invalid_argument("lsam_forward: channels not divisible by groups");
  Tensor w_h = gen_dynamic_weights(x, Axis::W, p.h_gen, p.spec, p.groups, p.softmax_weights);
  Tensor x_h = fsa_apply(focal_agents(x, Axis::W, p.spec), w_h, p.groups);
  Tensor w_v = gen_dynamic_weights(x_h, Axis::H, p.v_gen, p.spec, p.groups, p.softmax_weights);
  return fsa_apply(focal_agents(x_h, Axis::H, p.spec), w_v, p.groups);
}

}  // namespace lamnet
