#include "coattendwg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace coattendwg {

std::size_t shape_numel(std::span<const int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(std::span<const int> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(std::span<const int> shape) {
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor shape must be positive, got " +
                                  shape_str(shape));
    }
  }
}

[[noreturn]] void shape_mismatch(const char* op, std::span<const int> a,
                                 std::span<const int> b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

Tensor Tensor::zeros(std::vector<int> shape) {
  check_shape(shape);
  auto p = std::make_shared<Payload>();
  p->data.assign(shape_numel(shape), 0.0);
  p->shape = std::move(shape);
  return Tensor(std::move(p));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.data()) v = value;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument(
        "from_data: shape " + shape_str(shape) + " wants " +
        std::to_string(shape_numel(shape)) + " values, got " +
        std::to_string(data.size()));
  }
  auto p = std::make_shared<Payload>();
  p->shape = std::move(shape);
  p->data = std::move(data);
  return Tensor(std::move(p));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::value() const {
  if (!p_ || p_->data.size() != 1) {
    throw std::invalid_argument("value(): tensor is not scalar");
  }
  return p_->data[0];
}

void Tensor::ensure_zero_grad() const { p_->grad.assign(p_->data.size(), 0.0); }

Tensor Tensor::clone() const {
  if (!p_) return {};
  return from_data(p_->shape, p_->data);
}

bool Tensor::all_finite() const {
  for (double v : p_->data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

void Tape::record(std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  ops_.push_back(Op{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.shape()));
  }
  for (Op& op : ops_) {
    for (Tensor& in : op.inputs) in.ensure_zero_grad();
    op.output.ensure_zero_grad();
  }
  Tensor seed = loss;
  seed.ensure_zero_grad();
  seed.grad()[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->backward();
  }
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = a.data()[i] + b.data()[i];
  }
  record({a, b}, out, [a, b, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      a.grad()[i] += out.grad()[i];
      b.grad()[i] += out.grad()[i];
    }
  });
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("sub", a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = a.data()[i] - b.data()[i];
  }
  record({a, b}, out, [a, b, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      a.grad()[i] += out.grad()[i];
      b.grad()[i] -= out.grad()[i];
    }
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = a.data()[i] * b.data()[i];
  }
  record({a, b}, out, [a, b, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      a.grad()[i] += out.grad()[i] * b.data()[i];
      b.grad()[i] += out.grad()[i] * a.data()[i];
    }
  });
  return out;
}

Tensor Tape::scale(const Tensor& x, double factor) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = x.data()[i] * factor;
  }
  record({x}, out, [x, out, factor]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      x.grad()[i] += out.grad()[i] * factor;
    }
  });
  return out;
}

Tensor Tape::add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.ndim() != 1 || x.dim(x.ndim() - 1) != bias.dim(0)) {
    shape_mismatch("add_bias", x.shape(), bias.shape());
  }
  const std::size_t d = static_cast<std::size_t>(bias.dim(0));
  const std::size_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      out.data()[r * d + j] = x.data()[r * d + j] + bias.data()[j];
    }
  }
  record({x, bias}, out, [x, bias, out, rows, d]() {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        x.grad()[r * d + j] += out.grad()[r * d + j];
        bias.grad()[j] += out.grad()[r * d + j];
      }
    }
  });
  return out;
}

Tensor Tape::reshape(const Tensor& x, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    shape_mismatch("reshape", x.shape(), new_shape);
  }
  Tensor out = Tensor::from_data(std::move(new_shape),
                                 {x.data().begin(), x.data().end()});
  record({x}, out, [x, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      x.grad()[i] += out.grad()[i];
    }
  });
  return out;
}

namespace {

std::vector<std::size_t> row_major_strides(std::span<const int> shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    strides[static_cast<std::size_t>(i)] =
        strides[static_cast<std::size_t>(i) + 1] *
        static_cast<std::size_t>(shape[static_cast<std::size_t>(i) + 1]);
  }
  return strides;
}

// out[idx] = in[idx with axes a,b swapped]; returns the source flat index for
// each destination flat index.
void transpose_copy(std::span<const double> src, std::span<double> dst,
                    std::span<const int> out_shape,
                    const std::vector<std::size_t>& in_strides, int a, int b) {
  const std::size_t nd = out_shape.size();
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t flat = 0; flat < dst.size(); ++flat) {
    std::size_t src_flat = 0;
    for (std::size_t ax = 0; ax < nd; ++ax) {
      std::size_t src_ax = ax;
      if (ax == static_cast<std::size_t>(a)) src_ax = static_cast<std::size_t>(b);
      else if (ax == static_cast<std::size_t>(b)) src_ax = static_cast<std::size_t>(a);
      src_flat += idx[ax] * in_strides[src_ax];
    }
    dst[flat] += src[src_flat];
    for (std::size_t ax = nd; ax-- > 0;) {
      if (++idx[ax] < static_cast<std::size_t>(out_shape[ax])) break;
      idx[ax] = 0;
    }
  }
}

}  // namespace

Tensor Tape::transpose(const Tensor& x, int axis_a, int axis_b) {
  if (axis_a < 0 || axis_b < 0 || axis_a >= x.ndim() || axis_b >= x.ndim()) {
    throw std::invalid_argument("transpose: axes out of range for shape " +
                                shape_str(x.shape()));
  }
  std::vector<int> out_shape = x.shape();
  std::swap(out_shape[static_cast<std::size_t>(axis_a)],
            out_shape[static_cast<std::size_t>(axis_b)]);
  Tensor out = Tensor::zeros(out_shape);
  auto in_strides = row_major_strides(x.shape());
  transpose_copy(x.data(), out.data(), out.shape(), in_strides, axis_a, axis_b);
  record({x}, out, [x, out, axis_a, axis_b]() {
    auto strides = row_major_strides(out.shape());
    transpose_copy(out.grad(), x.grad(), x.shape(), strides, axis_a, axis_b);
  });
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
    shape_mismatch("concat_cols", a.shape(), b.shape());
  }
  const std::size_t rows = static_cast<std::size_t>(a.dim(0));
  const std::size_t da = static_cast<std::size_t>(a.dim(1));
  const std::size_t db = static_cast<std::size_t>(b.dim(1));
  Tensor out = Tensor::zeros({a.dim(0), a.dim(1) + b.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < da; ++j) {
      out.data()[r * (da + db) + j] = a.data()[r * da + j];
    }
    for (std::size_t j = 0; j < db; ++j) {
      out.data()[r * (da + db) + da + j] = b.data()[r * db + j];
    }
  }
  record({a, b}, out, [a, b, out, rows, da, db]() {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < da; ++j) {
        a.grad()[r * da + j] += out.grad()[r * (da + db) + j];
      }
      for (std::size_t j = 0; j < db; ++j) {
        b.grad()[r * db + j] += out.grad()[r * (da + db) + da + j];
      }
    }
  });
  return out;
}

Tensor Tape::slice_col(const Tensor& x, int col) {
  if (x.ndim() != 2 || col < 0 || col >= x.dim(1)) {
    throw std::invalid_argument("slice_col: column " + std::to_string(col) +
                                " out of range for " + shape_str(x.shape()));
  }
  const std::size_t rows = static_cast<std::size_t>(x.dim(0));
  const std::size_t cols = static_cast<std::size_t>(x.dim(1));
  Tensor out = Tensor::zeros({x.dim(0)});
  for (std::size_t r = 0; r < rows; ++r) {
    out.data()[r] = x.data()[r * cols + static_cast<std::size_t>(col)];
  }
  record({x}, out, [x, out, rows, cols, col]() {
    for (std::size_t r = 0; r < rows; ++r) {
      x.grad()[r * cols + static_cast<std::size_t>(col)] += out.grad()[r];
    }
  });
  return out;
}

Tensor Tape::scale_rows(const Tensor& x, const Tensor& w) {
  if (x.ndim() != 2 || w.ndim() != 1 || x.dim(0) != w.dim(0)) {
    shape_mismatch("scale_rows", x.shape(), w.shape());
  }
  const std::size_t rows = static_cast<std::size_t>(x.dim(0));
  const std::size_t d = static_cast<std::size_t>(x.dim(1));
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      out.data()[r * d + j] = x.data()[r * d + j] * w.data()[r];
    }
  }
  record({x, w}, out, [x, w, out, rows, d]() {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        x.grad()[r * d + j] += out.grad()[r * d + j] * w.data()[r];
        w.grad()[r] += out.grad()[r * d + j] * x.data()[r * d + j];
      }
    }
  });
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.data()[0] = acc;
  record({x}, out, [x, out]() {
    for (std::size_t i = 0; i < x.numel(); ++i) {
      x.grad()[i] += out.grad()[0];
    }
  });
  return out;
}

namespace {

// c[m,n] += a[m,k] . b[k,n] over raw rows.
void matmul_acc(std::span<const double> a, std::span<const double> b,
                std::span<double> c, std::size_t m, std::size_t k,
                std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        c[i * n + j] += av * b[p * n + j];
      }
    }
  }
}

// c[m,n] += a[m,k] . b[n,k]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[j * k + p];
      }
      c[i * n + j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T . b[m,n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t m, std::size_t k,
                   std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        c[p * n + j] += av * b[i * n + j];
      }
    }
  }
}

}  // namespace

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    shape_mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t m = static_cast<std::size_t>(a.dim(0));
  const std::size_t k = static_cast<std::size_t>(a.dim(1));
  const std::size_t n = static_cast<std::size_t>(b.dim(1));
  Tensor out = Tensor::zeros({a.dim(0), b.dim(1)});
  matmul_acc(a.data(), b.data(), out.data(), m, k, n);
  record({a, b}, out, [a, b, out, m, k, n]() {
    // dA = dC . B^T, dB = A^T . dC
    matmul_nt_acc(out.grad(), b.data(), a.grad(), m, n, k);
    matmul_tn_acc(a.data(), out.grad(), b.grad(), m, k, n);
  });
  return out;
}

Tensor Tape::bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.ndim() < 2 || a.ndim() != b.ndim()) {
    shape_mismatch("bmm", a.shape(), b.shape());
  }
  const int nd = a.ndim();
  for (int i = 0; i < nd - 2; ++i) {
    if (a.dim(i) != b.dim(i)) shape_mismatch("bmm", a.shape(), b.shape());
  }
  const std::size_t m = static_cast<std::size_t>(a.dim(nd - 2));
  const std::size_t k = static_cast<std::size_t>(a.dim(nd - 1));
  const std::size_t bk = static_cast<std::size_t>(
      transpose_b ? b.dim(nd - 1) : b.dim(nd - 2));
  const std::size_t n = static_cast<std::size_t>(
      transpose_b ? b.dim(nd - 2) : b.dim(nd - 1));
  if (bk != k) shape_mismatch("bmm", a.shape(), b.shape());

  std::vector<int> out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(static_cast<int>(n));
  Tensor out = Tensor::zeros(out_shape);

  const std::size_t groups = a.numel() / (m * k);
  for (std::size_t g = 0; g < groups; ++g) {
    auto ag = a.data().subspan(g * m * k, m * k);
    auto bg = b.data().subspan(g * k * n, k * n);
    auto cg = out.data().subspan(g * m * n, m * n);
    if (transpose_b) {
      matmul_nt_acc(ag, bg, cg, m, k, n);
    } else {
      matmul_acc(ag, bg, cg, m, k, n);
    }
  }
  record({a, b}, out, [a, b, out, groups, m, k, n, transpose_b]() {
    for (std::size_t g = 0; g < groups; ++g) {
      auto ag = a.data().subspan(g * m * k, m * k);
      auto bg = b.data().subspan(g * k * n, k * n);
      auto dag = a.grad().subspan(g * m * k, m * k);
      auto dbg = b.grad().subspan(g * k * n, k * n);
      auto dcg = out.grad().subspan(g * m * n, m * n);
      if (transpose_b) {
        // C = A . B^T with B stored [n,k]: dA = dC . B, dB = dC^T . A
        matmul_acc(dcg, bg, dag, m, n, k);
        matmul_tn_acc(dcg, ag, dbg, m, n, k);
      } else {
        matmul_nt_acc(dcg, bg, dag, m, n, k);
        matmul_tn_acc(ag, dcg, dbg, m, k, n);
      }
    }
  });
  return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                             : std::exp(v) / (1.0 + std::exp(v));
  }
  record({x}, out, [x, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double y = out.data()[i];
      x.grad()[i] += out.grad()[i] * y * (1.0 - y);
    }
  });
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  }
  record({x}, out, [x, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      if (x.data()[i] > 0.0) x.grad()[i] += out.grad()[i];
    }
  });
  return out;
}

Tensor Tape::gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  record({x}, out, [x, out]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double v = x.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      x.grad()[i] += out.grad()[i] * (cdf + v * pdf);
    }
  });
  return out;
}

Tensor Tape::softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.ndim()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t n = static_cast<std::size_t>(x.dim(axis));
  std::size_t inner = 1;
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
  const std::size_t outer = x.numel() / (n * inner);

  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = x.data()[base];
      for (std::size_t j = 1; j < n; ++j) {
        mx = std::max(mx, x.data()[base + j * inner]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(x.data()[base + j * inner] - mx);
        out.data()[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < n; ++j) {
        out.data()[base + j * inner] /= denom;
      }
    }
  }
  record({x}, out, [x, out, outer, n, inner]() {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dot += out.grad()[base + j * inner] * out.data()[base + j * inner];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          x.grad()[idx] += out.data()[idx] * (out.grad()[idx] - dot);
        }
      }
    }
  });
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, double eps) {
  const int d_axis = x.ndim() - 1;
  const std::size_t d = static_cast<std::size_t>(x.dim(d_axis));
  if (gamma.ndim() != 1 || beta.ndim() != 1 ||
      static_cast<std::size_t>(gamma.dim(0)) != d ||
      static_cast<std::size_t>(beta.dim(0)) != d) {
    shape_mismatch("layer_norm", x.shape(), gamma.shape());
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");

  const std::size_t rows = x.numel() / d;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> inv_std(rows), mean(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x.data()[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.data()[r * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_std[r] = istd;
    for (std::size_t j = 0; j < d; ++j) {
      out.data()[r * d + j] =
          (x.data()[r * d + j] - mu) * istd * gamma.data()[j] + beta.data()[j];
    }
  }
  record({x, gamma, beta}, out,
         [x, gamma, beta, out, rows, d, mean = std::move(mean),
          inv_std = std::move(inv_std)]() {
           for (std::size_t r = 0; r < rows; ++r) {
             double g_sum = 0.0, gx_sum = 0.0;
             for (std::size_t j = 0; j < d; ++j) {
               const std::size_t idx = r * d + j;
               const double xh = (x.data()[idx] - mean[r]) * inv_std[r];
               const double g = out.grad()[idx] * gamma.data()[j];
               gamma.grad()[j] += out.grad()[idx] * xh;
               beta.grad()[j] += out.grad()[idx];
               g_sum += g;
               gx_sum += g * xh;
             }
             const double inv_d = 1.0 / static_cast<double>(d);
             for (std::size_t j = 0; j < d; ++j) {
               const std::size_t idx = r * d + j;
               const double xh = (x.data()[idx] - mean[r]) * inv_std[r];
               const double g = out.grad()[idx] * gamma.data()[j];
               x.grad()[idx] +=
                   inv_std[r] * (g - inv_d * g_sum - xh * inv_d * gx_sum);
             }
           }
         });
  return out;
}

Tensor Tape::conv1d_same(const Tensor& x, const Tensor& kernel,
                         const Tensor& bias) {
  if (x.ndim() != 3 || kernel.ndim() != 3 || bias.ndim() != 1) {
    shape_mismatch("conv1d_same", x.shape(), kernel.shape());
  }
  const int k = kernel.dim(0);
  const int d = x.dim(2);
  if (k % 2 == 0) {
    throw std::invalid_argument("conv1d_same: kernel size must be odd, got " +
                                std::to_string(k));
  }
  if (kernel.dim(1) != d || kernel.dim(2) != d || bias.dim(0) != d) {
    shape_mismatch("conv1d_same", x.shape(), kernel.shape());
  }
  const int batch = x.dim(0);
  const int len = x.dim(1);
  const int half = (k - 1) / 2;

  Tensor out = Tensor::zeros(x.shape());
  auto xin = [&](int b, int t, int c) {
    return x.data()[(static_cast<std::size_t>(b) * len + t) * d + c];
  };
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < len; ++t) {
      for (int o = 0; o < d; ++o) {
        double acc = bias.data()[static_cast<std::size_t>(o)];
        for (int tap = 0; tap < k; ++tap) {
          const int s = t + tap - half;
          if (s < 0 || s >= len) continue;
          for (int c = 0; c < d; ++c) {
            acc += xin(b, s, c) *
                   kernel.data()[(static_cast<std::size_t>(tap) * d + c) * d + o];
          }
        }
        out.data()[(static_cast<std::size_t>(b) * len + t) * d + o] = acc;
      }
    }
  }
  record({x, kernel, bias}, out, [x, kernel, bias, out, batch, len, d, k,
                                  half]() {
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < len; ++t) {
        for (int o = 0; o < d; ++o) {
          const double go =
              out.grad()[(static_cast<std::size_t>(b) * len + t) * d + o];
          if (go == 0.0) continue;
          bias.grad()[static_cast<std::size_t>(o)] += go;
          for (int tap = 0; tap < k; ++tap) {
            const int s = t + tap - half;
            if (s < 0 || s >= len) continue;
            for (int c = 0; c < d; ++c) {
              const std::size_t xi =
                  (static_cast<std::size_t>(b) * len + s) * d + c;
              const std::size_t ki =
                  (static_cast<std::size_t>(tap) * d + c) * d + o;
              x.grad()[xi] += go * kernel.data()[ki];
              kernel.grad()[ki] += go * x.data()[xi];
            }
          }
        }
      }
    }
  });
  return out;
}

}  // namespace coattendwg
