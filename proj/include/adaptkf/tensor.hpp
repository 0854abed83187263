#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace adaptkf {

// Dense row-major matrix of doubles with a gradient slot. Copying a Tensor
// copies the handle, not the storage: all copies alias the same values and
// gradient accumulator. Leaves created with requires_grad=true collect
// gradients across backward() calls until zero_grad().
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}
  Tensor(int rows, int cols, bool requires_grad = false);

  static Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }
  static Tensor full(int rows, int cols, double v);
  static Tensor scalar(double v) { return full(1, 1, v); }
  static Tensor identity(int n);
  static Tensor row(const std::vector<double>& v, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);

  int rows() const { return impl_->rows; }
  int cols() const { return impl_->cols; }
  int size() const { return impl_->rows * impl_->cols; }
  bool same_shape(const Tensor& o) const {
    return rows() == o.rows() && cols() == o.cols();
  }
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  std::string shape_str() const;

  double operator()(int r, int c) const {
    return impl_->value[static_cast<size_t>(r) * impl_->cols + c];
  }
  double& at(int r, int c) {
    return impl_->value[static_cast<size_t>(r) * impl_->cols + c];
  }
  double item() const;  // value of a 1x1 tensor

  const std::vector<double>& value() const { return impl_->value; }
  std::vector<double>& value() { return impl_->value; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  // Gradient slot. The handle is value-like but the accumulator lives on the
  // shared storage, so grad mutation is const on the handle.
  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;  // materializes zeros on demand
  double grad_at(int r, int c) const;
  void zero_grad() const { impl_->grad.clear(); }
  void accumulate_grad(const std::vector<double>& g) const;
  void seed_grad(double v) const;  // adds v to the grad of a 1x1 tensor

  // Value copy that shares nothing with this tensor and requires no grad.
  Tensor detached() const;

  bool same_storage(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  struct Impl {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;  // empty until touched; same length as value
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  friend class Tape;
};

// Records operations in execution order and replays their backward rules in
// reverse. One tape per forward pass; a tape and its tensors are confined to
// a single thread. With grad disabled the ops compute values only and the
// tape stays empty, which is the inference path.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);

  // Elementwise binary ops; operands must have equal shape or one side 1x1.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);

  Tensor add_scalar(const Tensor& a, double c);
  Tensor scale(const Tensor& a, double c);

  Tensor tanh(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor softplus(const Tensor& a);  // log(1+e^x), returns x for x > 30
  Tensor square(const Tensor& a);

  // Inverse of a symmetric positive definite matrix via Cholesky. On factor
  // failure adds jitter eps*I with eps escalating 1e-9 -> 1e-3 (x10), then
  // throws SingularMatrixError carrying the smallest pivot seen.
  Tensor mat_inverse(const Tensor& a);

  Tensor sum(const Tensor& a);  // 1x1 total
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_cols(const Tensor& a, int col0, int ncols);
  Tensor diag_embed(const Tensor& rowvec);  // 1xn -> nxn diagonal

  // Populates grads of every requires_grad leaf reachable from loss.
  // Intermediate (op output) grads are reset at the start of each call, so
  // repeated backward calls accumulate into leaves only.
  void backward(const Tensor& loss);

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  size_t num_recorded() const { return ops_.size(); }

 private:
  struct Op {
    Tensor out;
    std::function<void()> backward;
  };

  Tensor make_output(int rows, int cols, bool needs_grad);
  void record(Tensor out, std::function<void()> fn);
  Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                            double (*fwd)(double, double), int mode);
  Tensor unary_elementwise(const Tensor& a, double (*fwd)(double),
                           double (*dfwd)(double));

  std::vector<Op> ops_;
  bool grad_enabled_ = true;
};

// Plain (tape-free) Cholesky factor L of a SPD matrix, lower triangular,
// row-major n*n. Returns false and reports the smallest pivot on failure.
bool cholesky_factor(const std::vector<double>& a, int n, std::vector<double>& l,
                     double* smallest_pivot);

// Central finite-difference friendly helpers used across modules.
std::string format_shapes(const Tensor& a, const Tensor& b);

}  // namespace adaptkf
