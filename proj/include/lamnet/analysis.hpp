#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lamnet/model.hpp"

namespace lamnet {

// Counting convention (details in README): one multiply-accumulate = 1 FLOP
// (flops_per_mac doubles it), convs cost HW*Cout*(Cin/g)*kh*kw, GELU and
// sigmoid cost 1 per element, gating multiplies cost 1 per element, pure
// additions (residuals, pooling sums, means) are free.
enum class Arch { swinir, dlgsanet, lamnet };
enum class Part { mixer, ffn, total, other };

const char* part_name(Part p);

struct Cost {
  int64_t params = 0;
  int64_t flops = 0;
};

// Closed-form per-layer costs (one mixer + one FFN) at feature resolution
// H x W. C must be even; Part::other is rejected.
Cost closed_form(Arch arch, Part part, int64_t C, int64_t K, int64_t G, int64_t H, int64_t W);

struct CostPolicy {
  bool include_bias = false;
  bool include_norm = true;
  int64_t flops_per_mac = 1;
};

struct CostRow {
  std::string name;
  Part part = Part::other;
  int64_t params = 0;
  int64_t flops = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  CostPolicy policy;

  int64_t total_params() const;
  int64_t total_flops() const;
  Cost part_cost(Part p) const;  // sum over rows tagged p
  void write_csv(std::ostream& os) const;
};

// Structural walk of an actual model at input resolution h x w; row part tags
// mark which rows the closed-form mixer/ffn expressions cover (pooling, IEM,
// norms and head/tail convs are tagged "other").
CostReport count_model(const Model& model, int64_t h, int64_t w, const CostPolicy& policy = {});

struct KSweepRow {
  int64_t k = 0;
  int64_t r = 0;
  int64_t fsa_mixer_flops = 0;     // affine in k
  int64_t window_mixer_flops = 0;  // quadratic in k (dense window attention)
};

std::vector<KSweepRow> k_sweep(std::span<const FocalSpec> specs, int64_t C, int64_t G,
                               int64_t H, int64_t W);
void write_k_sweep_csv(std::ostream& os, std::span<const KSweepRow> rows);

}  // namespace lamnet
