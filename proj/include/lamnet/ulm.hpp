#pragma once

#include "lamnet/fsa.hpp"
#include "lamnet/nn_ops.hpp"
#include "lamnet/tensor.hpp"

namespace lamnet {

// Channel self-modulation: Exp(ReLU(Sqz(x))), both 1x1 convs on the channel
// branch (C/2 wide, hidden defaults to C/2).
struct CsmParams {
  ConvParams sqz;
  ConvParams exp;

  static CsmParams init(int64_t channels, int64_t hidden, bool bias, DType dtype,
                        std::mt19937_64& rng);
  std::vector<NamedParam> named_params(const std::string& prefix) const;
};

Tensor csm_forward(const Tensor& x, const CsmParams& p);

// Parameter-free information exchange between the spatial branch xs and the
// channel branch xc (same shapes):
//   alpha[n,c] = sigmoid(mean_p(q . xs_c)),  q[p] = sum_c xc[n,c,p]
//   ys = alpha * xs                          (per-channel gate)
//   beta[n,p] = sigmoid(mean_c(r . xc_p)),   r[c] = sum_p xs[n,c,p]
//   yc = beta * xc                           (per-position gate)
struct IemResult {
  Tensor ys, yc;
  Tensor alpha;  // (N, C, 1, 1) gate values, diagnostics only
  Tensor beta;   // (N, 1, H, W) gate values, diagnostics only
};

IemResult iem_exchange_full(const Tensor& xs, const Tensor& xc);
std::pair<Tensor, Tensor> iem_exchange(const Tensor& xs, const Tensor& xc);

// Token mixer: 1x1 in-proj, hard channel split (first half spatial, second
// half channel), LSAM / CSM per branch, IEM, concat, 1x1 out-proj. The
// residual connection belongs to the caller.
struct UlmParams {
  ConvParams in_proj;
  LsamParams spatial;
  CsmParams csm;
  ConvParams out_proj;

  static UlmParams init(int64_t channels, int64_t groups, const FocalSpec& spec,
                        int64_t csm_hidden, bool softmax_weights, bool bias, DType dtype,
                        std::mt19937_64& rng);
  std::vector<NamedParam> named_params(const std::string& prefix) const;
};

Tensor ulm_forward(const Tensor& x, const UlmParams& p);

}  // namespace lamnet
