#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lamnet/image.hpp"
#include "lamnet/model.hpp"

namespace lamnet {

struct train_abort : std::runtime_error {
  int64_t step;
  explicit train_abort(int64_t s)
      : std::runtime_error("training aborted: non-finite loss at step " + std::to_string(s)),
        step(s) {}
};

// Mean absolute error over all elements; d|x|/dx at 0 is taken as 0.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct TrainConfig {
  int64_t total_steps = 500000;
  int64_t batch_size = 16;
  int64_t lr_patch = 64;
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // lr halves once the step passes each fraction of total_steps
  std::vector<double> milestones{0.5, 0.8, 0.9, 0.95};
  uint64_t seed = 0;
  bool augment = true;
  // With shuffle off, batches walk the dataset round-robin (batch_size ==
  // dataset size then trains on the whole fixed set every step).
  bool shuffle = true;
  int64_t checkpoint_every = 0;  // 0 = final checkpoint only
  int64_t log_every = 1;
  std::string checkpoint_out;    // empty = no checkpoints written

  bool operator==(const TrainConfig&) const = default;
};

// Step-indexed (1-based) piecewise-constant schedule:
// lr0 * 0.5^(#milestones with step > floor(frac * total_steps)).
double lr_at(const TrainConfig& cfg, int64_t step);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int64_t step = 0;

  void init(const std::vector<NamedParam>& params);
};

// Bias-corrected in-place Adam over param.grad; throws std::logic_error if a
// trainable parameter has no gradient (detached graph).
void adam_step(std::vector<NamedParam>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps);

struct TrainLogRow {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double initial_loss = 0.0;  // loss of the very first step
  double final_loss = 0.0;
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  const TrainCallback& callback = {});

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log);

}  // namespace lamnet
