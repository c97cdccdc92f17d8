#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace lamnet {

// Storage is always double; dtype controls round-on-write quantization of op
// outputs / parameter updates and the on-disk payload width. Gradients are
// kept in double regardless.
enum class DType : uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType d);
DType dtype_from_name(const std::string& name);

struct Shape4 {
  int64_t n = 0, c = 0, h = 0, w = 0;

  int64_t numel() const { return n * c * h * w; }
  int64_t operator[](int i) const { return i == 0 ? n : i == 1 ? c : i == 2 ? h : w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

struct TensorImpl {
  Shape4 shape;
  DType dtype = DType::f32;
  bool requires_grad = false;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
  // Rounds stored values through the declared precision.
  void quantize() {
    if (dtype == DType::f32)
      for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape4 s, DType d = DType::f32, bool requires_grad = false);
  static Tensor full(Shape4 s, double value, DType d = DType::f32, bool requires_grad = false);
  static Tensor from_data(Shape4 s, std::vector<double> values, DType d = DType::f32,
                          bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape4& shape() const { return impl_->shape; }
  int64_t numel() const { return impl_->shape.numel(); }
  DType dtype() const { return impl_->dtype; }
  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  int64_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
    const Shape4& s = impl_->shape;
    return ((n * s.c + c) * s.h + h) * s.w + w;
  }
  double& at(int64_t n, int64_t c, int64_t h, int64_t w) { return impl_->data[index(n, c, h, w)]; }
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return impl_->data[index(n, c, h, w)];
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }
  void ensure_grad() { impl_->ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
  void quantize() { impl_->quantize(); }

  Tensor clone() const;      // fresh storage, no grad history
  Tensor astype(DType) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. Constructing a Tape pushes it on a thread-local stack;
// ops record onto the innermost active tape when any input requires grad.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::vector<std::shared_ptr<TensorImpl>> outputs, std::function<void()> backward);
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays recorded nodes in strict reverse
  // order, accumulating into .grad of requires_grad tensors. loss must be a
  // scalar (1,1,1,1) recorded on this tape.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> outputs;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

// Convenience: backward on the innermost active tape.
void backward(const Tensor& loss);

// Suspends recording for its scope: ops behave as if no tape were active,
// even when the operands require grad.
class TapePause {
 public:
  TapePause();
  ~TapePause();
  TapePause(const TapePause&) = delete;
  TapePause& operator=(const TapePause&) = delete;
};

// ---- elementwise ----

enum class EwOp { add, sub, mul, scale, gelu, relu, sigmoid };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor gelu(const Tensor& a);   // exact x * Phi(x)
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Dispatcher form; binary ops take b, scale takes the scalar.
Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b = nullptr, double scalar = 0.0);

double gelu_scalar(double x);
double sigmoid_scalar(double x);

// ---- reductions / layout ----

enum class Axis : uint8_t { N = 0, C = 1, H = 2, W = 3 };
enum class ReduceOp { sum, mean };

Tensor reduce(ReduceOp op, const Tensor& x, const std::vector<Axis>& axes);
Tensor reduce_all(ReduceOp op, const Tensor& x);  // -> (1,1,1,1)

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, int64_t c_begin, int64_t c_end);

// Softmax over contiguous runs of k values along C; requires C == groups * k.
Tensor softmax_groups(const Tensor& x, int64_t groups, int64_t k);

// ---- init helpers ----

void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi);
void fill_normal(Tensor& t, std::mt19937_64& rng, double mean, double stddev);

}  // namespace lamnet
