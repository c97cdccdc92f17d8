#include "lamnet/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace lamnet {

namespace {

double sum_forward(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                   const std::vector<Tensor>& inputs) {
  Tensor y = f(inputs);
  double s = 0.0;
  for (double v : y.values()) {
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite forward value");
    s += v;
  }
  return s;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double eps) {
  if (inputs.empty()) throw std::invalid_argument("grad_check: no inputs");
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw std::invalid_argument("grad_check: undefined input");
    if (t.dtype() != DType::f64)
      throw std::invalid_argument("grad_check: inputs must be f64");
  }

  // Analytic pass: d(sum(f))/d(input) via the tape.
  std::vector<std::vector<double>> analytic;
  {
    for (Tensor& t : inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tape tape;
    Tensor y = f(inputs);
    for (double v : y.values())
      if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite forward value");
    Tensor s = reduce_all(ReduceOp::sum, y);
    tape.backward(s);
    for (const Tensor& t : inputs) {
      if (t.has_grad()) {
        for (double g : t.grad())
          if (!std::isfinite(g)) throw std::runtime_error("grad_check: non-finite gradient");
        analytic.push_back(t.grad());
      } else {
        analytic.emplace_back(static_cast<size_t>(t.numel()), 0.0);
      }
    }
  }

  GradCheckResult res;
  for (size_t i = 0; i < inputs.size(); ++i) {
    std::vector<double>& vals = inputs[i].values();
    for (size_t j = 0; j < vals.size(); ++j) {
      const double saved = vals[j];
      vals[j] = saved + eps;
      double up = sum_forward(f, inputs);
      vals[j] = saved - eps;
      double down = sum_forward(f, inputs);
      vals[j] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[i][j];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.input_index = i;
        res.flat_coord = static_cast<int64_t>(j);
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace lamnet
