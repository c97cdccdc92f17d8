#pragma once

#include <span>
#include <string>
#include <vector>

#include "lamnet/tensor.hpp"

namespace lamnet {

// Stride-1 cross-correlation conv with zero same-padding; odd kernels only.
// weight is (C_out, C_in/groups, kh, kw); bias, when present, is (1,C_out,1,1).
struct ConvParams {
  Tensor weight;
  Tensor bias;  // undefined tensor == no bias
  int64_t groups = 1;

  int64_t out_channels() const { return weight.shape().n; }
  int64_t in_channels() const { return weight.shape().c * groups; }
  bool has_bias() const { return bias.defined(); }
};

// He-uniform fan-in init (bound = sqrt(6 / fan_in)), bias zero.
ConvParams make_conv(int64_t c_in, int64_t c_out, int64_t kh, int64_t kw, int64_t groups,
                     bool bias, DType dtype, std::mt19937_64& rng);

Tensor conv2d(const Tensor& x, const ConvParams& p);

// Depthwise 1D conv along H or W. weight is (C,1,1,K), K odd, zero same-padding.
Tensor dwconv1d(const Tensor& x, const ConvParams& p, Axis axis);

// Normalizes over the channel dimension at every (n,h,w) position
// (population variance); gamma/beta are (1,C,1,1).
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           double eps = 1e-6);

// (N, C*r^2, H, W) -> (N, C, H*r, W*r); channel c*r^2 + dy*r + dx lands on
// spatial offset (dy, dx).
Tensor pixel_shuffle(const Tensor& x, int64_t r);
// Exact inverse rearrangement.
Tensor pixel_unshuffle(const Tensor& x, int64_t r);

enum class ParamKind { conv_weight, conv_bias, norm };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamKind kind = ParamKind::conv_weight;
};

void append_conv_params(std::vector<NamedParam>& out, const std::string& prefix,
                        const ConvParams& p);

int64_t count_trainables(std::span<const NamedParam> params, bool include_bias,
                         bool include_norm);

}  // namespace lamnet
