#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/rng.hpp"

namespace pmlc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };    // dimension mismatch
struct NumericError : Error { using Error::Error; };  // NaN/Inf produced
struct ConfigError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };  // divergence, bad gradients

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << '}';
  return os.str();
}

namespace detail {

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::uint64_t id = next_node_id();
};

}  // namespace detail

// Dense 64-bit float tensor of 1..3 dims, row-major. Copies share the
// underlying node; use clone() for an independent copy. Gradients accumulate
// into the node when a Tape is active and requires_grad is set.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return Tensor(std::move(shape), 0.0);
  }

  static Tensor full(Shape shape, double v) {
    return Tensor(std::move(shape), v);
  }

  static Tensor from_values(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), 0.0);
    if (values.size() != t.numel())
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(t.shape()));
    t.d_->values = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return full({1}, v); }

  static Tensor vector(std::initializer_list<double> v) {
    return from_values({v.size()}, std::vector<double>(v));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t m = rows.size();
    std::size_t n = rows.begin()->size();
    std::vector<double> v;
    v.reserve(m * n);
    for (const auto& r : rows) {
      if (r.size() != n) throw ShapeError("tensor: ragged row in matrix literal");
      v.insert(v.end(), r.begin(), r.end());
    }
    return from_values({m, n}, std::move(v));
  }

  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape), 0.0);
    for (double& x : t.d_->values) x = rng.uniform(lo, hi);
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }

  const Shape& shape() const { return d_->shape; }
  std::size_t ndim() const { return d_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return d_->shape.at(axis); }
  std::size_t numel() const { return d_->values.size(); }
  std::uint64_t node_id() const { return d_->id; }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  double& at(std::size_t i) { return d_->values[i]; }
  double at(std::size_t i) const { return d_->values[i]; }
  double& at(std::size_t i, std::size_t j) { return d_->values[i * d_->shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return d_->values[i * d_->shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return d_->values[(i * d_->shape[1] + j) * d_->shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return d_->values[(i * d_->shape[1] + j) * d_->shape[2] + k];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    d_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }

  // read-only view; empty span if no gradient has been accumulated yet
  std::span<const double> grad_view() const {
    return {d_->grad.data(), d_->grad.size()};
  }

  double grad_at(std::size_t i) const { return d_->grad.empty() ? 0.0 : d_->grad[i]; }

  void zero_grad() const { d_->grad.clear(); }

  void accumulate_grad(std::span<const double> g) const {
    ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) d_->grad[i] += g[i];
  }

  void accumulate_grad_at(std::size_t i, double g) const {
    ensure_grad();
    d_->grad[i] += g;
  }

  void seed_grad(double v) const {
    ensure_grad();
    for (double& g : d_->grad) g = v;
  }

  Tensor clone() const {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->shape = d_->shape;
    t.d_->values = d_->values;
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  bool same_node(const Tensor& other) const { return d_ == other.d_; }

 private:
  Tensor(Shape shape, double fill) {
    if (shape.empty() || shape.size() > 3)
      throw ShapeError("tensor: rank must be 1..3, got " + shape_str(shape));
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
      n *= e;
    }
    d_ = std::make_shared<detail::TensorData>();
    d_->shape = std::move(shape);
    d_->values.assign(n, fill);
  }

  void ensure_grad() const {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  }

  std::shared_ptr<detail::TensorData> d_;
};

// Reverse-mode tape. Constructing a Tape makes it the active tape for the
// current thread; ops record their backward rules while one is active.
// One forward/backward pass owns its tape exclusively.
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

  std::size_t size() const { return rules_.size(); }

  void clear() { rules_.clear(); }

  // Seeds the (scalar) loss gradient with 1 and replays recorded rules in
  // reverse order; every tracked input accumulates its gradient exactly once
  // per use.
  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    loss.seed_grad(1.0);
    for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  }

 private:
  inline static thread_local Tape* active_ = nullptr;
  std::vector<std::function<void()>> rules_;
  Tape* prev_ = nullptr;
};

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values())
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite value produced");
}

inline void finish(Tensor& out, bool tracked, const char* op, std::function<void()> rule) {
  check_finite(out, op);
  if (tracked) {
    out.set_requires_grad(true);
    if (Tape* t = Tape::active()) t->record(std::move(rule));
  }
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matrix / vector products

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.extent(1) != b.extent(0))
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a.at(i, t);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(t, j);
    }
  bool tracked = a.requires_grad() || b.requires_grad();
  detail::finish(out, tracked, "matmul", [a, b, out, m, k, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad()) {  // dL/da = g . b^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b.at(t, j);
          a.accumulate_grad_at(i * k + t, acc);
        }
    }
    if (b.requires_grad()) {  // dL/db = a^T . g
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0;
          for (std::size_t i = 0; i < m; ++i) acc += a.at(i, t) * g[i * n + j];
          b.accumulate_grad_at(t * n + j, acc);
        }
    }
  });
  return out;
}

inline Tensor matvec(const Tensor& a, const Tensor& x) {
  detail::require_matrix(a, "matvec");
  if (x.ndim() != 1 || a.extent(1) != x.extent(0))
    throw ShapeError("matvec: shapes disagree " + shape_str(a.shape()) + " vs " +
                     shape_str(x.shape()));
  const std::size_t m = a.extent(0), k = a.extent(1);
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < k; ++j) acc += a.at(i, j) * x.at(j);
    out.at(i) = acc;
  }
  bool tracked = a.requires_grad() || x.requires_grad();
  detail::finish(out, tracked, "matvec", [a, x, out, m, k] {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad())
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) a.accumulate_grad_at(i * k + j, g[i] * x.at(j));
    if (x.requires_grad())
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0;
        for (std::size_t i = 0; i < m; ++i) acc += a.at(i, j) * g[i];
        x.accumulate_grad_at(j, acc);
      }
  });
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  detail::finish(out, a.requires_grad(), "transpose", [a, out, m, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) a.accumulate_grad_at(i * n + j, g[j * m + i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + b.at(i);
  bool tracked = a.requires_grad() || b.requires_grad();
  detail::finish(out, tracked, "add", [a, b, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad()) b.accumulate_grad(g);
  });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) - b.at(i);
  bool tracked = a.requires_grad() || b.requires_grad();
  detail::finish(out, tracked, "sub", [a, b, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad()) a.accumulate_grad(g);
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.accumulate_grad_at(i, -g[i]);
  });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * b.at(i);
  bool tracked = a.requires_grad() || b.requires_grad();
  detail::finish(out, tracked, "mul", [a, b, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.accumulate_grad_at(i, g[i] * b.at(i));
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) b.accumulate_grad_at(i, g[i] * a.at(i));
  });
  return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) / b.at(i);
  bool tracked = a.requires_grad() || b.requires_grad();
  detail::finish(out, tracked, "div", [a, b, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i) a.accumulate_grad_at(i, g[i] / b.at(i));
    if (b.requires_grad())
      for (std::size_t i = 0; i < g.size(); ++i)
        b.accumulate_grad_at(i, -g[i] * a.at(i) / (b.at(i) * b.at(i)));
  });
  return out;
}

// scale * a + shift
inline Tensor affine(const Tensor& a, double scale, double shift) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = scale * a.at(i) + shift;
  detail::finish(out, a.requires_grad(), "affine", [a, out, scale] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) a.accumulate_grad_at(i, scale * g[i]);
  });
  return out;
}

inline Tensor tanh(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = std::tanh(a.at(i));
  detail::finish(out, a.requires_grad(), "tanh", [a, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      a.accumulate_grad_at(i, g[i] * (1.0 - out.at(i) * out.at(i)));
  });
  return out;
}

inline Tensor sigmoid(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double x = a.at(i);
    out.at(i) = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                       : std::exp(x) / (1.0 + std::exp(x));
  }
  detail::finish(out, a.requires_grad(), "sigmoid", [a, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      a.accumulate_grad_at(i, g[i] * out.at(i) * (1.0 - out.at(i)));
  });
  return out;
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.01) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double x = a.at(i);
    out.at(i) = x >= 0 ? x : slope * x;
  }
  detail::finish(out, a.requires_grad(), "leaky_relu", [a, out, slope] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      a.accumulate_grad_at(i, g[i] * (a.at(i) >= 0 ? 1.0 : slope));
  });
  return out;
}

// ---------------------------------------------------------------------------
// softmax

namespace detail {

// Row softmax restricted to unmasked columns; masked outputs are exactly 0.
// Stable via per-row max subtraction over the unmasked entries.
inline Tensor softmax_rows_impl(const Tensor& a, const std::vector<std::uint8_t>* mask) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.extent(0), n = a.extent(1);
  if (mask) {
    if (mask->size() != n)
      throw ShapeError("softmax_rows: mask length " + std::to_string(mask->size()) +
                       " does not match columns " + std::to_string(n));
    bool any = false;
    for (std::uint8_t b : *mask) any = any || b;
    if (!any) throw InputError("softmax_rows: all positions masked");
  }
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)[j]) mx = std::max(mx, a.at(i, j));
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[j]) continue;
      double e = std::exp(a.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (!mask || (*mask)[j]) out.at(i, j) /= sum;
  }
  finish(out, a.requires_grad(), "softmax_rows", [a, out, m, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0;  // sum_j g_j * y_j over the row (masked entries are 0)
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * out.at(i, j);
      for (std::size_t j = 0; j < n; ++j)
        a.accumulate_grad_at(i * n + j, out.at(i, j) * (g[i * n + j] - dot));
    }
  });
  return out;
}

}  // namespace detail

inline Tensor softmax_rows(const Tensor& a) {
  return detail::softmax_rows_impl(a, nullptr);
}

inline Tensor softmax_rows_masked(const Tensor& a, const std::vector<std::uint8_t>& mask) {
  return detail::softmax_rows_impl(a, &mask);
}

// ---------------------------------------------------------------------------
// shape manipulation

inline Tensor concat_last_dim(const Tensor& a, const Tensor& b) {
  if (a.ndim() != b.ndim() || a.ndim() > 2)
    throw ShapeError("concat_last_dim: ranks disagree " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out;
  std::size_t rows = 1, na = 0, nb = 0;
  if (a.ndim() == 1) {
    na = a.extent(0);
    nb = b.extent(0);
    out = Tensor::zeros({na + nb});
  } else {
    if (a.extent(0) != b.extent(0))
      throw ShapeError("concat_last_dim: row counts disagree " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
    rows = a.extent(0);
    na = a.extent(1);
    nb = b.extent(1);
    out = Tensor::zeros({rows, na + nb});
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < na; ++j) out.at(i * (na + nb) + j) = a.at(i * na + j);
    for (std::size_t j = 0; j < nb; ++j) out.at(i * (na + nb) + na + j) = b.at(i * nb + j);
  }
  bool tracked = a.requires_grad() || b.requires_grad();
  detail::finish(out, tracked, "concat_last_dim", [a, b, out, rows, na, nb] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < rows; ++i) {
      if (a.requires_grad())
        for (std::size_t j = 0; j < na; ++j)
          a.accumulate_grad_at(i * na + j, g[i * (na + nb) + j]);
      if (b.requires_grad())
        for (std::size_t j = 0; j < nb; ++j)
          b.accumulate_grad_at(i * nb + j, g[i * (na + nb) + na + j]);
    }
  });
  return out;
}

inline Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({1});
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
  out.at(0) = acc;
  detail::finish(out, a.requires_grad(), "sum", [a, out] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < a.numel(); ++i) a.accumulate_grad_at(i, g[0]);
  });
  return out;
}

inline Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::zeros({1});
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a.at(i);
  out.at(0) = acc * inv;
  detail::finish(out, a.requires_grad(), "mean", [a, out, inv] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < a.numel(); ++i) a.accumulate_grad_at(i, g[0] * inv);
  });
  return out;
}

// row i of a matrix, as a 1-D tensor
inline Tensor row(const Tensor& a, std::size_t i) {
  detail::require_matrix(a, "row");
  if (i >= a.extent(0))
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                     shape_str(a.shape()));
  const std::size_t n = a.extent(1);
  Tensor out = Tensor::zeros({n});
  for (std::size_t j = 0; j < n; ++j) out.at(j) = a.at(i, j);
  detail::finish(out, a.requires_grad(), "row", [a, out, i, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t j = 0; j < n; ++j) a.accumulate_grad_at(i * n + j, g[j]);
  });
  return out;
}

// slice along the leading axis of a 3-D tensor
inline Tensor select(const Tensor& a, std::size_t i) {
  if (a.ndim() != 3)
    throw ShapeError("select: expected rank-3 tensor, got " + shape_str(a.shape()));
  if (i >= a.extent(0))
    throw ShapeError("select: index " + std::to_string(i) + " out of range for " +
                     shape_str(a.shape()));
  const std::size_t m = a.extent(1), n = a.extent(2);
  Tensor out = Tensor::zeros({m, n});
  const std::size_t base = i * m * n;
  for (std::size_t j = 0; j < m * n; ++j) out.at(j) = a.at(base + j);
  detail::finish(out, a.requires_grad(), "select", [a, out, base, m, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t j = 0; j < m * n; ++j) a.accumulate_grad_at(base + j, g[j]);
  });
  return out;
}

// stacks equal-length 1-D tensors into a matrix, one per row
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t n = rows[0].extent(0);
  for (const Tensor& r : rows)
    if (r.ndim() != 1 || r.extent(0) != n)
      throw ShapeError("stack_rows: row shape " + shape_str(r.shape()) +
                       " does not match {" + std::to_string(n) + "}");
  const std::size_t m = rows.size();
  Tensor out = Tensor::zeros({m, n});
  bool tracked = false;
  for (std::size_t i = 0; i < m; ++i) {
    tracked = tracked || rows[i].requires_grad();
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = rows[i].at(j);
  }
  detail::finish(out, tracked, "stack_rows", [rows, out, m, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < m; ++i) {
      if (!rows[i].requires_grad()) continue;
      for (std::size_t j = 0; j < n; ++j) rows[i].accumulate_grad_at(j, g[i * n + j]);
    }
  });
  return out;
}

// row i of the output is w[i] * a[i, :]
inline Tensor scale_rows(const Tensor& a, const Tensor& w) {
  detail::require_matrix(a, "scale_rows");
  if (w.ndim() != 1 || w.extent(0) != a.extent(0))
    throw ShapeError("scale_rows: weight shape " + shape_str(w.shape()) +
                     " does not match rows of " + shape_str(a.shape()));
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) * w.at(i);
  bool tracked = a.requires_grad() || w.requires_grad();
  detail::finish(out, tracked, "scale_rows", [a, w, out, m, n] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < m; ++i) {
      if (a.requires_grad())
        for (std::size_t j = 0; j < n; ++j)
          a.accumulate_grad_at(i * n + j, g[i * n + j] * w.at(i));
      if (w.requires_grad()) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * a.at(i, j);
        w.accumulate_grad_at(i, acc);
      }
    }
  });
  return out;
}

// mean of scalar tensors (batch loss aggregation)
inline Tensor mean_of(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ShapeError("mean_of: no inputs");
  Tensor out = Tensor::zeros({1});
  double acc = 0;
  bool tracked = false;
  for (const Tensor& s : scalars) {
    if (s.numel() != 1)
      throw ShapeError("mean_of: expected scalars, got " + shape_str(s.shape()));
    acc += s.at(0);
    tracked = tracked || s.requires_grad();
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  out.at(0) = acc * inv;
  detail::finish(out, tracked, "mean_of", [scalars, out, inv] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (const Tensor& s : scalars)
      if (s.requires_grad()) s.accumulate_grad_at(0, g[0] * inv);
  });
  return out;
}

// ---------------------------------------------------------------------------
// loss

// Binary cross entropy summed over labels for one sample. Probabilities are
// clamped to [1e-12, 1-1e-12] before the logs; gradient passes through only
// inside the clamp bounds.
inline Tensor bce_loss(const Tensor& yhat, const std::vector<double>& target) {
  if (yhat.ndim() != 1 || yhat.extent(0) != target.size())
    throw ShapeError("bce_loss: prediction shape " + shape_str(yhat.shape()) +
                     " does not match " + std::to_string(target.size()) + " targets");
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  for (double y : target)
    if (y != 0.0 && y != 1.0)
      throw InputError("bce_loss: target entry " + std::to_string(y) + " not in {0,1}");
  Tensor out = Tensor::zeros({1});
  double acc = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    double c = std::min(hi, std::max(lo, yhat.at(i)));
    acc -= target[i] * std::log(c) + (1.0 - target[i]) * std::log(1.0 - c);
  }
  out.at(0) = acc;
  detail::finish(out, yhat.requires_grad(), "bce_loss", [yhat, target, out, lo, hi] {
    auto g = out.grad_view();
    if (g.empty()) return;
    for (std::size_t i = 0; i < target.size(); ++i) {
      double v = yhat.at(i);
      if (v <= lo || v >= hi) continue;  // flat region of the clamp
      yhat.accumulate_grad_at(i, g[0] * (-target[i] / v + (1.0 - target[i]) / (1.0 - v)));
    }
  });
  return out;
}

}  // namespace pmlc
