#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace coattendwg {

std::size_t shape_numel(std::span<const int> shape);
std::string shape_str(std::span<const int> shape);

// Dense row-major double tensor. Value type with a shared payload: copies are
// handles to the same storage, which is how the tape identifies nodes. The
// handle is shallow-const (like shared_ptr): accessors are const but expose
// mutable storage. Data is immutable by convention once an op has produced
// it; the grad slot is filled during Tape::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double value);  // shape [1]

  explicit operator bool() const { return static_cast<bool>(p_); }

  const std::vector<int>& shape() const { return p_->shape; }
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  int dim(int axis) const { return p_->shape[static_cast<std::size_t>(axis)]; }
  std::size_t numel() const { return p_->data.size(); }

  std::span<double> data() const { return p_->data; }

  // Scalar convenience; requires numel() == 1.
  double value() const;

  bool has_grad() const { return p_ && !p_->grad.empty(); }
  std::span<double> grad() const { return p_->grad; }
  void ensure_zero_grad() const;
  void clear_grad() const { p_->grad.clear(); }

  // Deep copy of shape + data (grad not copied).
  Tensor clone() const;

  // Stable node identity for tape bookkeeping.
  const void* id() const { return p_.get(); }

  bool all_finite() const;

 private:
  struct Payload {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
  };
  explicit Tensor(std::shared_ptr<Payload> p) : p_(std::move(p)) {}
  std::shared_ptr<Payload> p_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Records every op of one forward pass in construction order (which is a
// topological order by construction) so a single reverse sweep propagates
// gradients, summing over fan-out. One tape per training step; tapes are not
// shared between threads.
class Tape {
 public:
  // -- elementwise / structural ------------------------------------------
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double factor);
  Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias over last axis
  Tensor reshape(const Tensor& x, std::vector<int> new_shape);
  Tensor transpose(const Tensor& x, int axis_a, int axis_b);
  Tensor concat_cols(const Tensor& a, const Tensor& b);  // 2-D, last axis
  Tensor slice_col(const Tensor& x, int col);            // [R,C] -> [R]
  Tensor scale_rows(const Tensor& x, const Tensor& w);   // [R,D] * [R] -> [R,D]
  Tensor sum(const Tensor& x);                           // -> [1]

  // -- linear algebra -----------------------------------------------------
  Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
  // Batched matmul over matching leading dims; transpose_b treats b as
  // [..., n, k] and computes a . b^T.
  Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

  // -- nonlinearities / normalization --------------------------------------
  Tensor sigmoid(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor gelu(const Tensor& x);
  Tensor softmax(const Tensor& x, int axis);  // max-subtracted, slices sum to 1
  Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps);
  // x [B,L,D], kernel [k,D,D] (k odd), bias [D]; zero padding keeps length.
  Tensor conv1d_same(const Tensor& x, const Tensor& kernel, const Tensor& bias);

  // Appends a custom op. `backward` reads output.grad() and accumulates into
  // the inputs' grads; grads of everything on the tape are zeroed before the
  // reverse sweep starts.
  void record(std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  // Reverse sweep from a scalar loss. Populates grad for every tensor on the
  // tape; leaves not reachable from `loss` end up with zero grad.
  void backward(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }

 private:
  struct Op {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Op> ops_;
};

}  // namespace coattendwg
