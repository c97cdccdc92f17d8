#include "lamnet/dgfn.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace lamnet {

DgfnParams DgfnParams::init(int64_t channels, bool bias, DType dtype, std::mt19937_64& rng) {
  if (channels <= 0) throw std::invalid_argument("DgfnParams: channels must be positive");
  DgfnParams p;
  p.exp1 = make_conv(channels, 2 * channels, 1, 1, 1, bias, dtype, rng);
  p.dw = make_conv(2 * channels, 2 * channels, 3, 3, 2 * channels, bias, dtype, rng);
  p.sqz = make_conv(2 * channels, channels, 1, 1, 1, bias, dtype, rng);
  return p;
}

std::vector<NamedParam> DgfnParams::named_params(const std::string& prefix) const {
  std::vector<NamedParam> out;
  append_conv_params(out, prefix + ".exp1", exp1);
  append_conv_params(out, prefix + ".dw", dw);
  append_conv_params(out, prefix + ".sqz", sqz);
  return out;
}

namespace {

struct DgfnGates {
  Tensor self_gate, cross_gate;
};

DgfnGates dgfn_gates(const Tensor& x, const DgfnParams& p) {
  const int64_t C = x.shape().c;
  if (C != p.exp1.in_channels())
    throw std::invalid_argument("dgfn_forward: input has " + std::to_string(C) +
                                " channels, params expect " +
                                std::to_string(p.exp1.in_channels()));
  Tensor e = conv2d(conv2d(x, p.exp1), p.dw);
  Tensor x1 = slice_channels(e, 0, C);
  Tensor x2 = slice_channels(e, C, 2 * C);
  Tensor g = gelu(x1);
  return {mul(x1, g), mul(x2, g)};
}

}  // namespace

Tensor dgfn_forward(const Tensor& x, const DgfnParams& p) {
  DgfnGates g = dgfn_gates(x, p);
  return conv2d(concat_channels(g.self_gate, g.cross_gate), p.sqz);
}

GateStats gate_stats(const Tensor& x, const DgfnParams& p) {
  TapePause pause;
  DgfnGates g = dgfn_gates(x, p);
  return {g.self_gate, g.cross_gate};
}

Histogram histogram(const Tensor& values, int bins, double lo, double hi) {
  if (bins <= 0) throw std::invalid_argument("histogram: bins must be positive");
  if (!(hi > lo)) throw std::invalid_argument("histogram: hi must exceed lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (double v : values.values()) {
    int64_t b = static_cast<int64_t>(std::floor((v - lo) / width));
    if (b < 0) b = 0;
    if (b >= bins) b = bins - 1;  // right edge and overflow clamp into last bin
    ++h.counts[static_cast<size_t>(b)];
  }
  return h;
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_left,count\n";
  const double width = h.bin_width();
  for (size_t i = 0; i < h.counts.size(); ++i)
    os << (h.lo + width * static_cast<double>(i)) << "," << h.counts[i] << "\n";
}

}  // namespace lamnet
