#pragma once

#include <vector>

#include "lamnet/nn_ops.hpp"
#include "lamnet/tensor.hpp"

namespace lamnet {

// Multi-scale focal window along one axis: level l contributes t_l agent
// tokens per side, each pooling s_l consecutive pixels.
struct FocalSpec {
  std::vector<int64_t> strides;  // s_l, pooling width per level
  std::vector<int64_t> steps;    // t_l, agents per side per level

  void validate() const;
  int64_t levels() const { return static_cast<int64_t>(strides.size()); }
  bool operator==(const FocalSpec&) const = default;
};

// K = 1 + 2 * sum(t_l): one center token plus t_l per side per level.
int64_t kernel_len(const FocalSpec& spec);
// R = 1 + 2 * sum(s_l * t_l): total pixel span the K tokens cover.
int64_t receptive_field(const FocalSpec& spec);

// Pooling footprint of one agent slot relative to the query position:
// the slot averages x[p+lo .. p+hi] (zeros outside the axis) divided by the
// fixed pool width, i.e. inv_div = 1/s_l regardless of clipping.
struct SlotRange {
  int64_t lo = 0, hi = 0;
  double inv_div = 1.0;
};

// Slots ordered far-negative .. center .. far-positive; center at index
// sum(t_l). slot_ranges(spec).size() == kernel_len(spec).
std::vector<SlotRange> slot_ranges(const FocalSpec& spec);

struct FocalAgents {
  Tensor agents;  // (N, C*K, H, W); channel c*K + k holds slot k of channel c
  bool window_exceeds_axis = false;  // K > 2*extent + 1 along `axis`
};

FocalAgents focal_agents_full(const Tensor& x, Axis axis, const FocalSpec& spec);
Tensor focal_agents(const Tensor& x, Axis axis, const FocalSpec& spec);

// One axis of the dynamic-weight generator: depthwise 1D conv (kernel K along
// the aggregation axis) followed by a 1x1 conv C_b -> G*K.
struct AxisWeightGen {
  ConvParams dw;
  ConvParams pw;
};

struct LsamParams {
  AxisWeightGen h_gen;  // weights for aggregation along W (applied first)
  AxisWeightGen v_gen;  // weights for aggregation along H
  int64_t groups = 1;
  FocalSpec spec;
  bool softmax_weights = false;

  static LsamParams init(int64_t branch_channels, int64_t groups, const FocalSpec& spec,
                         bool softmax_weights, bool bias, DType dtype, std::mt19937_64& rng);
  std::vector<NamedParam> named_params(const std::string& prefix) const;
};

// (N, C_b, H, W) -> (N, G*K, H, W); composition of dwconv1d and conv2d, so it
// is bit-identical to calling those two ops directly.
Tensor gen_dynamic_weights(const Tensor& x, Axis axis, const AxisWeightGen& gen,
                           const FocalSpec& spec, int64_t groups, bool softmax_weights);

// y[n,c,p] = sum_k weights[n, g*K+k, p] * agents[n, c*K+k, p] with
// g = c / (C_b / groups).
Tensor fsa_apply(const Tensor& agents, const Tensor& weights, int64_t groups);

// Horizontal aggregation from x-derived weights, then vertical aggregation
// with weights generated from the horizontal result.
Tensor lsam_forward(const Tensor& x, const LsamParams& p);

}  // namespace lamnet
