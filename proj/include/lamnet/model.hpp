#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "lamnet/dgfn.hpp"
#include "lamnet/fsa.hpp"
#include "lamnet/nn_ops.hpp"
#include "lamnet/ulm.hpp"

namespace lamnet {

struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LamNetConfig {
  int64_t scale = 2;
  int64_t channels = 64;
  int64_t num_blocks = 4;       // residual groups
  int64_t pairs_per_block = 4;  // (ULM, DGFN) pairs per group
  int64_t groups = 4;           // dynamic-weight groups G
  FocalSpec focal{{1, 2, 4}, {3, 2, 1}};
  int64_t csm_hidden = 0;  // 0 = channels/2
  bool softmax_weights = false;
  bool bias = false;
  DType dtype = DType::f32;

  void validate() const;
  int64_t resolved_csm_hidden() const { return csm_hidden > 0 ? csm_hidden : channels / 2; }

  static LamNetConfig base();
  static LamNetConfig large();  // 5 blocks x 6 pairs at C=64

  bool operator==(const LamNetConfig&) const = default;
};

struct PairParams {
  Tensor ln1_gamma, ln1_beta;
  UlmParams ulm;
  Tensor ln2_gamma, ln2_beta;
  DgfnParams dgfn;
};

struct BlockParams {
  std::vector<PairParams> pairs;
};

struct ForwardTrace {
  Tensor shallow;  // after the 3->C conv
  Tensor deep;     // trunk conv output + shallow (global residual)
  Tensor output;   // reconstructed RGB, (N, 3, H*scale, W*scale)
};

struct Model {
  LamNetConfig config;
  ConvParams shallow;                // 3x3, 3 -> C
  std::vector<BlockParams> blocks;
  ConvParams trunk;                  // 3x3, C -> C
  ConvParams rec;                    // 3x3, C -> 3*scale^2, feeds pixel_shuffle

  ForwardTrace forward_trace(const Tensor& i_lr) const;
  Tensor forward(const Tensor& i_lr) const;
  std::vector<NamedParam> named_params() const;
  int64_t parameter_count(bool include_bias = true, bool include_norm = true) const;
};

Model build(const LamNetConfig& config, uint64_t seed);

// Binary checkpoint: magic, format version, config record, named tensors.
void save(const Model& model, const std::string& path);
Model load(const std::string& path);

// Copies every tensor except the reconstruction head from the checkpoint into
// model; checkpoint config must match model.config apart from scale.
void load_transfer(Model& model, const std::string& path);

std::string config_to_json(const LamNetConfig& c);
LamNetConfig config_from_json(const std::string& text);

}  // namespace lamnet
