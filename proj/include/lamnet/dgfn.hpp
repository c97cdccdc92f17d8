#pragma once

#include "lamnet/nn_ops.hpp"
#include "lamnet/tensor.hpp"

namespace lamnet {

// Dual-gated feed-forward: expand 1x1 C->2C, depthwise 3x3, split into
// X1/X2, gate both halves with GELU(X1), squeeze 1x1 2C->C.
// Parameter count (bias-free): 4C^2 + 18C.
struct DgfnParams {
  ConvParams exp1;  // 1x1, C -> 2C
  ConvParams dw;    // 3x3 depthwise on 2C
  ConvParams sqz;   // 1x1, 2C -> C

  static DgfnParams init(int64_t channels, bool bias, DType dtype, std::mt19937_64& rng);
  std::vector<NamedParam> named_params(const std::string& prefix) const;
};

Tensor dgfn_forward(const Tensor& x, const DgfnParams& p);

// Pre-squeeze gate activations for inspection: self = X1*GELU(X1),
// cross = X2*GELU(X1). Not recorded on any tape.
struct GateStats {
  Tensor self_gate;
  Tensor cross_gate;
};

GateStats gate_stats(const Tensor& x, const DgfnParams& p);

// Fixed-width histogram over [lo, hi] -> bins rows of (bin_left, count).
struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<int64_t> counts;
  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

Histogram histogram(const Tensor& values, int bins, double lo, double hi);
void write_histogram_csv(std::ostream& os, const Histogram& h);

}  // namespace lamnet
