#include "lamnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lamnet {

const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw std::invalid_argument("unknown dtype '" + name + "' (expected f32 or f64)");
}

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
  return os.str();
}

namespace {

void check_shape(const Shape4& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
    throw std::invalid_argument("tensor dims must be positive, got " + to_string(s));
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                " vs " + to_string(b.shape()));
  if (a.dtype() != b.dtype())
    throw std::invalid_argument(std::string(op) + ": dtype mismatch");
}

thread_local std::vector<Tape*> g_tape_stack;

}  // namespace

Tensor Tensor::zeros(Shape4 s, DType d, bool requires_grad) {
  check_shape(s);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->dtype = d;
  impl->requires_grad = requires_grad;
  impl->data.assign(static_cast<size_t>(s.numel()), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape4 s, double value, DType d, bool requires_grad) {
  Tensor t = zeros(s, d, requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  t.quantize();
  return t;
}

Tensor Tensor::from_data(Shape4 s, std::vector<double> values, DType d, bool requires_grad) {
  check_shape(s);
  if (static_cast<int64_t>(values.size()) != s.numel())
    throw std::invalid_argument("from_data: got " + std::to_string(values.size()) +
                                " values for shape " + to_string(s));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = s;
  impl->dtype = d;
  impl->requires_grad = requires_grad;
  impl->data = std::move(values);
  impl->quantize();
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = zeros(shape(), dtype(), requires_grad());
  t.values() = values();
  return t;
}

Tensor Tensor::astype(DType d) const {
  Tensor t = zeros(shape(), d, requires_grad());
  t.values() = values();
  t.quantize();
  return t;
}

// ---- tape ----

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
  // Tapes are scoped objects; innermost dies first.
  if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
  else
    g_tape_stack.erase(std::remove(g_tape_stack.begin(), g_tape_stack.end(), this),
                       g_tape_stack.end());
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

TapePause::TapePause() { g_tape_stack.push_back(nullptr); }

TapePause::~TapePause() {
  if (!g_tape_stack.empty() && g_tape_stack.back() == nullptr) g_tape_stack.pop_back();
}

void Tape::record(std::vector<std::shared_ptr<TensorImpl>> outputs,
                  std::function<void()> backward) {
  nodes_.push_back({std::move(outputs), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss tensor");
  if (!(loss.shape() == Shape4{1, 1, 1, 1}))
    throw std::invalid_argument("backward: loss must be scalar (1,1,1,1), got " +
                                to_string(loss.shape()));
  bool found = false;
  for (const Node& n : nodes_)
    for (const auto& out : n.outputs)
      if (out == loss.impl()) found = true;
  if (!found) throw std::invalid_argument("backward: loss was not recorded on this tape");
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

void backward(const Tensor& loss) {
  Tape* t = Tape::active();
  if (!t) throw std::logic_error("backward: no active tape");
  t->backward(loss);
}

namespace {

// True when the op should produce a grad-tracking output.
bool any_rg(std::initializer_list<const Tensor*> ts) {
  for (const Tensor* t : ts)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

void maybe_record(const Tensor& out, std::function<void()> fn) {
  if (Tape* t = Tape::active(); t && out.requires_grad())
    t->record({out.impl()}, std::move(fn));
}

}  // namespace

// ---- elementwise ----

double gelu_scalar(double x) { return x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); }

double sigmoid_scalar(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 void (*fwd)(const double*, const double*, double*, int64_t),
                 void (*bwd)(TensorImpl& ai, TensorImpl& bi, const TensorImpl& yi)) {
  check_same(a, b, name);
  Tensor y = Tensor::zeros(a.shape(), a.dtype(), any_rg({&a, &b}));
  fwd(a.data(), b.data(), y.data(), a.numel());
  y.quantize();
  auto ai = a.impl(), bi = b.impl(), yi = y.impl();
  maybe_record(y, [ai, bi, yi, bwd] {
    if (yi->grad.empty()) return;
    bwd(*ai, *bi, *yi);
  });
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b,
      [](const double* pa, const double* pb, double* py, int64_t n) {
        for (int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
      },
      [](TensorImpl& ai, TensorImpl& bi, const TensorImpl& yi) {
        const int64_t n = yi.shape.numel();
        if (ai.requires_grad) {
          ai.ensure_grad();
          for (int64_t i = 0; i < n; ++i) ai.grad[i] += yi.grad[i];
        }
        if (bi.requires_grad) {
          bi.ensure_grad();
          for (int64_t i = 0; i < n; ++i) bi.grad[i] += yi.grad[i];
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b,
      [](const double* pa, const double* pb, double* py, int64_t n) {
        for (int64_t i = 0; i < n; ++i) py[i] = pa[i] - pb[i];
      },
      [](TensorImpl& ai, TensorImpl& bi, const TensorImpl& yi) {
        const int64_t n = yi.shape.numel();
        if (ai.requires_grad) {
          ai.ensure_grad();
          for (int64_t i = 0; i < n; ++i) ai.grad[i] += yi.grad[i];
        }
        if (bi.requires_grad) {
          bi.ensure_grad();
          for (int64_t i = 0; i < n; ++i) bi.grad[i] -= yi.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b,
      [](const double* pa, const double* pb, double* py, int64_t n) {
        for (int64_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
      },
      [](TensorImpl& ai, TensorImpl& bi, const TensorImpl& yi) {
        const int64_t n = yi.shape.numel();
        if (ai.requires_grad) {
          ai.ensure_grad();
          for (int64_t i = 0; i < n; ++i) ai.grad[i] += yi.grad[i] * bi.data[i];
        }
        if (bi.requires_grad) {
          bi.ensure_grad();
          for (int64_t i = 0; i < n; ++i) bi.grad[i] += yi.grad[i] * ai.data[i];
        }
      });
}

Tensor scale(const Tensor& a, double s) {
  Tensor y = Tensor::zeros(a.shape(), a.dtype(), a.requires_grad());
  const int64_t n = a.numel();
  const double* pa = a.data();
  double* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = pa[i] * s;
  y.quantize();
  auto ai = a.impl(), yi = y.impl();
  maybe_record(y, [ai, yi, s] {
    if (yi->grad.empty() || !ai->requires_grad) return;
    ai->ensure_grad();
    const int64_t n = yi->shape.numel();
    for (int64_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i] * s;
  });
  return y;
}

namespace {

Tensor unary_op(const Tensor& a, double (*f)(double),
                std::function<void(TensorImpl&, const TensorImpl&)> bwd) {
  Tensor y = Tensor::zeros(a.shape(), a.dtype(), a.requires_grad());
  const int64_t n = a.numel();
  const double* pa = a.data();
  double* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = f(pa[i]);
  y.quantize();
  auto ai = a.impl(), yi = y.impl();
  maybe_record(y, [ai, yi, bwd = std::move(bwd)] {
    if (yi->grad.empty() || !ai->requires_grad) return;
    ai->ensure_grad();
    bwd(*ai, *yi);
  });
  return y;
}

}  // namespace

Tensor gelu(const Tensor& a) {
  return unary_op(a, &gelu_scalar, [](TensorImpl& ai, const TensorImpl& yi) {
    const int64_t n = yi.shape.numel();
    for (int64_t i = 0; i < n; ++i) {
      double x = ai.data[i];
      double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
      ai.grad[i] += yi.grad[i] * (phi + x * normal_pdf(x));
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](TensorImpl& ai, const TensorImpl& yi) {
        const int64_t n = yi.shape.numel();
        for (int64_t i = 0; i < n; ++i)
          if (ai.data[i] > 0) ai.grad[i] += yi.grad[i];
      });
}

Tensor sigmoid(const Tensor& a) {
  Tensor y = Tensor::zeros(a.shape(), a.dtype(), a.requires_grad());
  const int64_t n = a.numel();
  const double* pa = a.data();
  double* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = sigmoid_scalar(pa[i]);
  y.quantize();
  auto ai = a.impl(), yi = y.impl();
  maybe_record(y, [ai, yi] {
    if (yi->grad.empty() || !ai->requires_grad) return;
    ai->ensure_grad();
    const int64_t n = yi->shape.numel();
    for (int64_t i = 0; i < n; ++i) {
      double s = yi->data[i];
      ai->grad[i] += yi->grad[i] * s * (1.0 - s);
    }
  });
  return y;
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b, double scalar) {
  auto need_b = [&]() -> const Tensor& {
    if (!b || !b->defined())
      throw std::invalid_argument("elementwise: binary op requires a second operand");
    return *b;
  };
  switch (op) {
    case EwOp::add: return add(a, need_b());
    case EwOp::sub: return sub(a, need_b());
    case EwOp::mul: return mul(a, need_b());
    case EwOp::scale: return scale(a, scalar);
    case EwOp::gelu: return gelu(a);
    case EwOp::relu: return relu(a);
    case EwOp::sigmoid: return sigmoid(a);
  }
  throw std::invalid_argument("elementwise: unknown op");
}

// ---- reductions ----

Tensor reduce(ReduceOp op, const Tensor& x, const std::vector<Axis>& axes) {
  bool keep[4] = {true, true, true, true};
  for (Axis a : axes) keep[static_cast<int>(a)] = false;
  const Shape4 in = x.shape();
  Shape4 out{keep[0] ? in.n : 1, keep[1] ? in.c : 1, keep[2] ? in.h : 1, keep[3] ? in.w : 1};
  int64_t count = in.numel() / out.numel();
  const double inv = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;

  Tensor y = Tensor::zeros(out, x.dtype(), x.requires_grad());
  const double* px = x.data();
  double* py = y.data();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t c = 0; c < in.c; ++c)
      for (int64_t h = 0; h < in.h; ++h) {
        const double* row = px + ((n * in.c + c) * in.h + h) * in.w;
        for (int64_t w = 0; w < in.w; ++w) {
          int64_t oi = ((std::min(n, out.n - 1) * out.c + std::min(c, out.c - 1)) * out.h +
                        std::min(h, out.h - 1)) *
                           out.w +
                       std::min(w, out.w - 1);
          py[oi] += row[w];
        }
      }
  if (op == ReduceOp::mean)
    for (int64_t i = 0; i < out.numel(); ++i) py[i] *= inv;
  y.quantize();

  auto xi = x.impl(), yi = y.impl();
  maybe_record(y, [xi, yi, inv] {
    if (yi->grad.empty() || !xi->requires_grad) return;
    xi->ensure_grad();
    const Shape4 in = xi->shape;
    const Shape4 out = yi->shape;
    for (int64_t n = 0; n < in.n; ++n)
      for (int64_t c = 0; c < in.c; ++c)
        for (int64_t h = 0; h < in.h; ++h)
          for (int64_t w = 0; w < in.w; ++w) {
            int64_t oi = ((std::min(n, out.n - 1) * out.c + std::min(c, out.c - 1)) * out.h +
                          std::min(h, out.h - 1)) *
                             out.w +
                         std::min(w, out.w - 1);
            xi->grad[((n * in.c + c) * in.h + h) * in.w + w] += yi->grad[oi] * inv;
          }
  });
  return y;
}

Tensor reduce_all(ReduceOp op, const Tensor& x) {
  return reduce(op, x, {Axis::N, Axis::C, Axis::H, Axis::W});
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape4 sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw std::invalid_argument("concat_channels: non-channel dims differ, " + to_string(sa) +
                                " vs " + to_string(sb));
  if (a.dtype() != b.dtype()) throw std::invalid_argument("concat_channels: dtype mismatch");
  Shape4 out{sa.n, sa.c + sb.c, sa.h, sa.w};
  Tensor y = Tensor::zeros(out, a.dtype(), any_rg({&a, &b}));
  const int64_t plane = sa.h * sa.w;
  for (int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.data() + n * sa.c * plane, sa.c * plane, y.data() + n * out.c * plane);
    std::copy_n(b.data() + n * sb.c * plane, sb.c * plane,
                y.data() + (n * out.c + sa.c) * plane);
  }
  auto ai = a.impl(), bi = b.impl(), yi = y.impl();
  maybe_record(y, [ai, bi, yi, plane] {
    if (yi->grad.empty()) return;
    const Shape4 sa = ai->shape, sb = bi->shape, out = yi->shape;
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (int64_t n = 0; n < sa.n; ++n)
        for (int64_t i = 0; i < sa.c * plane; ++i)
          ai->grad[n * sa.c * plane + i] += yi->grad[n * out.c * plane + i];
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (int64_t n = 0; n < sb.n; ++n)
        for (int64_t i = 0; i < sb.c * plane; ++i)
          bi->grad[n * sb.c * plane + i] += yi->grad[(n * out.c + sa.c) * plane + i];
    }
  });
  return y;
}

Tensor slice_channels(const Tensor& x, int64_t c_begin, int64_t c_end) {
  const Shape4 in = x.shape();
  if (c_begin < 0 || c_end > in.c || c_begin >= c_end)
    throw std::invalid_argument("slice_channels: bad range [" + std::to_string(c_begin) + "," +
                                std::to_string(c_end) + ") for C=" + std::to_string(in.c));
  Shape4 out{in.n, c_end - c_begin, in.h, in.w};
  Tensor y = Tensor::zeros(out, x.dtype(), x.requires_grad());
  const int64_t plane = in.h * in.w;
  for (int64_t n = 0; n < in.n; ++n)
    std::copy_n(x.data() + (n * in.c + c_begin) * plane, out.c * plane,
                y.data() + n * out.c * plane);
  auto xi = x.impl(), yi = y.impl();
  maybe_record(y, [xi, yi, c_begin, plane] {
    if (yi->grad.empty() || !xi->requires_grad) return;
    xi->ensure_grad();
    const Shape4 in = xi->shape, out = yi->shape;
    for (int64_t n = 0; n < in.n; ++n)
      for (int64_t i = 0; i < out.c * plane; ++i)
        xi->grad[(n * in.c + c_begin) * plane + i] += yi->grad[n * out.c * plane + i];
  });
  return y;
}

Tensor softmax_groups(const Tensor& x, int64_t groups, int64_t k) {
  const Shape4 in = x.shape();
  if (groups <= 0 || k <= 0 || groups * k != in.c)
    throw std::invalid_argument("softmax_groups: C=" + std::to_string(in.c) +
                                " != groups*k = " + std::to_string(groups) + "*" +
                                std::to_string(k));
  Tensor y = Tensor::zeros(in, x.dtype(), x.requires_grad());
  const int64_t plane = in.h * in.w;
  const double* px = x.data();
  double* py = y.data();
  for (int64_t n = 0; n < in.n; ++n)
    for (int64_t g = 0; g < groups; ++g)
      for (int64_t p = 0; p < plane; ++p) {
        const int64_t base = (n * in.c + g * k) * plane + p;
        double mx = px[base];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, px[base + j * plane]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
          double e = std::exp(px[base + j * plane] - mx);
          py[base + j * plane] = e;
          sum += e;
        }
        for (int64_t j = 0; j < k; ++j) py[base + j * plane] /= sum;
      }
  y.quantize();
  auto xi = x.impl(), yi = y.impl();
  maybe_record(y, [xi, yi, groups, k, plane] {
    if (yi->grad.empty() || !xi->requires_grad) return;
    xi->ensure_grad();
    const Shape4 in = xi->shape;
    for (int64_t n = 0; n < in.n; ++n)
      for (int64_t g = 0; g < groups; ++g)
        for (int64_t p = 0; p < plane; ++p) {
          const int64_t base = (n * in.c + g * k) * plane + p;
          double dot = 0.0;
          for (int64_t j = 0; j < k; ++j)
            dot += yi->grad[base + j * plane] * yi->data[base + j * plane];
          for (int64_t j = 0; j < k; ++j) {
            double yj = yi->data[base + j * plane];
            xi->grad[base + j * plane] += yj * (yi->grad[base + j * plane] - dot);
          }
        }
  });
  return y;
}

void fill_uniform(Tensor& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.values()) v = dist(rng);
  t.quantize();
}

void fill_normal(Tensor& t, std::mt19937_64& rng, double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : t.values()) v = dist(rng);
  t.quantize();
}

}  // namespace lamnet
