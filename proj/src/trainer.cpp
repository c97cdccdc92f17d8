#include "lamnet/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace lamnet {

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (!(pred.shape() == target.shape()))
    throw std::invalid_argument("l1_loss: shape mismatch " + to_string(pred.shape()) + " vs " +
                                to_string(target.shape()));
  const int64_t n = pred.numel();
  const double inv = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::fabs(pred.data()[i] - target.data()[i]);
  bool rg = pred.requires_grad() || target.requires_grad();
  Tensor loss = Tensor::from_data({1, 1, 1, 1}, {acc * inv}, pred.dtype(), rg);
  auto pi = pred.impl(), ti = target.impl(), li = loss.impl();
  if (Tape* t = Tape::active(); t && rg) {
    t->record({li}, [pi, ti, li, inv] {
      if (li->grad.empty()) return;
      const double g = li->grad[0] * inv;
      const int64_t n = pi->shape.numel();
      const bool need_dp = pi->requires_grad, need_dt = ti->requires_grad;
      if (need_dp) pi->ensure_grad();
      if (need_dt) ti->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        const double d = pi->data[i] - ti->data[i];
        const double s = d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0;  // sign(0) = 0
        if (need_dp) pi->grad[i] += g * s;
        if (need_dt) ti->grad[i] -= g * s;
      }
    });
  }
  return loss;
}

double lr_at(const TrainConfig& cfg, int64_t step) {
  if (step < 1) throw std::invalid_argument("lr_at: steps are 1-based");
  int halvings = 0;
  for (double frac : cfg.milestones) {
    const auto boundary = static_cast<int64_t>(
        std::floor(frac * static_cast<double>(cfg.total_steps)));
    if (step > boundary) ++halvings;
  }
  return cfg.lr0 * std::pow(0.5, halvings);
}

void AdamState::init(const std::vector<NamedParam>& params) {
  m.clear();
  v.clear();
  step = 0;
  for (const NamedParam& p : params) {
    m.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
    v.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
  }
}

void adam_step(std::vector<NamedParam>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (state.m.size() != params.size())
    throw std::logic_error("adam_step: state not initialized for this parameter set");
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    if (!t.requires_grad()) continue;
    if (!t.has_grad())
      throw std::logic_error("adam_step: parameter '" + params[i].name +
                             "' has no gradient (graph detached?)");
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    const std::vector<double>& g = t.grad();
    std::vector<double>& w = t.values();
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    t.quantize();
  }
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg,
                  const TrainCallback& callback) {
  if (cfg.total_steps < 0 || cfg.batch_size < 1 || cfg.lr_patch < 1 || cfg.log_every < 1)
    throw std::invalid_argument("train: bad config");
  if (data.pairs.empty()) throw std::invalid_argument("train: empty dataset");
  if (data.scale != model.config.scale)
    throw std::invalid_argument("train: dataset scale " + std::to_string(data.scale) +
                                " does not match model scale " +
                                std::to_string(model.config.scale));

  std::mt19937_64 rng(cfg.seed);
  auto params = model.named_params();
  AdamState state;
  state.init(params);

  TrainResult result;
  int64_t cursor = 0;  // round-robin position when shuffle is off
  std::uniform_int_distribution<size_t> pick(0, data.pairs.size() - 1);

  for (int64_t step = 1; step <= cfg.total_steps; ++step) {
    std::vector<Tensor> lr_patches, hr_patches;
    lr_patches.reserve(static_cast<size_t>(cfg.batch_size));
    hr_patches.reserve(static_cast<size_t>(cfg.batch_size));
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      size_t idx;
      if (cfg.shuffle) {
        idx = pick(rng);
      } else {
        idx = static_cast<size_t>(cursor % static_cast<int64_t>(data.pairs.size()));
        ++cursor;
      }
      PatchSample s = sample_patch(data.pairs[idx], cfg.lr_patch, data.scale, rng, cfg.augment);
      lr_patches.push_back(s.lr);
      hr_patches.push_back(s.hr);
    }
    Tensor lrb = stack_batch(lr_patches, model.config.dtype);
    Tensor hrb = stack_batch(hr_patches, model.config.dtype);

    double loss_value;
    {
      Tape tape;
      Tensor pred = model.forward(lrb);
      Tensor loss = l1_loss(pred, hrb);
      loss_value = loss.values()[0];
      if (!std::isfinite(loss_value)) throw train_abort(step);
      tape.backward(loss);
    }
    adam_step(params, state, lr_at(cfg, step), cfg.beta1, cfg.beta2, cfg.adam_eps);
    for (NamedParam& p : params) p.tensor.zero_grad();

    if (step == 1) result.initial_loss = loss_value;
    result.final_loss = loss_value;
    if (step % cfg.log_every == 0 || step == cfg.total_steps) {
      TrainLogRow row{step, lr_at(cfg, step), loss_value};
      result.log.push_back(row);
      if (callback) callback(row);
    }
    if (!cfg.checkpoint_out.empty() && cfg.checkpoint_every > 0 &&
        step % cfg.checkpoint_every == 0 && step != cfg.total_steps)
      save(model, cfg.checkpoint_out);
  }
  if (!cfg.checkpoint_out.empty()) save(model, cfg.checkpoint_out);
  return result;
}

void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log) {
  os << "step,lr,loss\n";
  os << std::setprecision(17);
  for (const TrainLogRow& row : log)
    os << row.step << "," << row.lr << "," << row.loss << "\n";
}

}  // namespace lamnet
