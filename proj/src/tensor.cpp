#include "adaptkf/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#include "adaptkf/errors.hpp"

namespace adaptkf {

namespace {

std::vector<double> empty_grad;

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(int rows, int cols, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (rows < 0 || cols < 0) {
    throw DimensionError("tensor: negative shape [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "]");
  }
  impl_->rows = rows;
  impl_->cols = cols;
  impl_->value.assign(static_cast<size_t>(rows) * cols, 0.0);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::full(int rows, int cols, double v) {
  Tensor t(rows, cols);
  for (double& x : t.impl_->value) x = v;
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::row(const std::vector<double>& v, bool requires_grad) {
  Tensor t(1, static_cast<int>(v.size()), requires_grad);
  t.impl_->value = v;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  int r = static_cast<int>(rows.size());
  int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Tensor t(r, c, requires_grad);
  int i = 0;
  for (const auto& rr : rows) {
    if (static_cast<int>(rr.size()) != c) {
      throw DimensionError("from_rows: ragged rows");
    }
    int j = 0;
    for (double v : rr) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
}

double Tensor::item() const {
  if (!is_scalar()) {
    throw ContractError("item: tensor is not scalar, shape " + shape_str());
  }
  return impl_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) {
    if (impl_->value.empty()) return empty_grad;
    impl_->grad.assign(impl_->value.size(), 0.0);
  }
  return impl_->grad;
}

double Tensor::grad_at(int r, int c) const {
  if (impl_->grad.empty()) return 0.0;
  return impl_->grad[static_cast<size_t>(r) * impl_->cols + c];
}

void Tensor::accumulate_grad(const std::vector<double>& g) const {
  if (g.size() != impl_->value.size()) {
    throw DimensionError("accumulate_grad: size mismatch");
  }
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  for (size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

void Tensor::seed_grad(double v) const {
  if (!is_scalar()) {
    throw ContractError("seed_grad: tensor is not scalar, shape " + shape_str());
  }
  if (impl_->grad.empty()) impl_->grad.assign(1, 0.0);
  impl_->grad[0] += v;
}

Tensor Tensor::detached() const {
  Tensor t(rows(), cols());
  t.impl_->value = impl_->value;
  return t;
}

std::string format_shapes(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " vs " + b.shape_str();
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tensor Tape::make_output(int rows, int cols, bool needs_grad) {
  Tensor out(rows, cols);
  out.impl_->requires_grad = needs_grad;
  return out;
}

void Tape::record(Tensor out, std::function<void()> fn) {
  ops_.push_back(Op{std::move(out), std::move(fn)});
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree: " + format_shapes(a, b));
  }
  const int m = a.rows(), k = a.cols(), n = b.cols();
  bool needs = grad_enabled_ && (a.requires_grad() || b.requires_grad());
  Tensor out = make_output(m, n, needs);
  const double* pa = a.value().data();
  const double* pb = b.value().data();
  double* po = out.value().data();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      const double* brow = pb + static_cast<size_t>(kk) * n;
      double* orow = po + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (needs) {
    record(out, [a, b, out, m, k, n]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      if (a.requires_grad()) {
        // dA = G * B^T
        std::vector<double> da(static_cast<size_t>(m) * k, 0.0);
        const double* pb2 = b.value().data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const double gv = g[static_cast<size_t>(i) * n + j];
            for (int kk = 0; kk < k; ++kk)
              da[static_cast<size_t>(i) * k + kk] += gv * pb2[static_cast<size_t>(kk) * n + j];
          }
        a.accumulate_grad(da);
      }
      if (b.requires_grad()) {
        // dB = A^T * G
        std::vector<double> db(static_cast<size_t>(k) * n, 0.0);
        const double* pa2 = a.value().data();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double av = pa2[static_cast<size_t>(i) * k + kk];
            for (int j = 0; j < n; ++j)
              db[static_cast<size_t>(kk) * n + j] += av * g[static_cast<size_t>(i) * n + j];
          }
        b.accumulate_grad(db);
      }
    });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(n, m, needs);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a(i, j);
  if (needs) {
    record(out, [a, out, m, n]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      std::vector<double> da(static_cast<size_t>(m) * n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          da[static_cast<size_t>(i) * n + j] = g[static_cast<size_t>(j) * m + i];
      a.accumulate_grad(da);
    });
  }
  return out;
}

// mode: 0 add, 1 sub, 2 mul
Tensor Tape::binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                                double (*fwd)(double, double), int mode) {
  const bool a_scalar = a.is_scalar();
  const bool b_scalar = b.is_scalar();
  if (!a.same_shape(b) && !a_scalar && !b_scalar) {
    throw DimensionError(std::string(name) + ": incompatible shapes: " + format_shapes(a, b));
  }
  const Tensor& shaped = a_scalar && !b_scalar ? b : a;
  const int m = shaped.rows(), n = shaped.cols();
  bool needs = grad_enabled_ && (a.requires_grad() || b.requires_grad());
  Tensor out = make_output(m, n, needs);
  const size_t sz = out.value().size();
  for (size_t i = 0; i < sz; ++i) {
    double av = a_scalar ? a.value()[0] : a.value()[i];
    double bv = b_scalar ? b.value()[0] : b.value()[i];
    out.value()[i] = fwd(av, bv);
  }
  if (needs) {
    record(out, [a, b, out, a_scalar, b_scalar, mode, sz]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      if (a.requires_grad()) {
        std::vector<double> da(a.value().size(), 0.0);
        for (size_t i = 0; i < sz; ++i) {
          double gi = g[i];
          if (mode == 2) gi *= b_scalar ? b.value()[0] : b.value()[i];
          da[a_scalar ? 0 : i] += gi;
        }
        a.accumulate_grad(da);
      }
      if (b.requires_grad()) {
        std::vector<double> db(b.value().size(), 0.0);
        for (size_t i = 0; i < sz; ++i) {
          double gi = g[i];
          if (mode == 1) gi = -gi;
          if (mode == 2) gi = g[i] * (a_scalar ? a.value()[0] : a.value()[i]);
          db[b_scalar ? 0 : i] += gi;
        }
        b.accumulate_grad(db);
      }
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "add", [](double x, double y) { return x + y; }, 0);
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "sub", [](double x, double y) { return x - y; }, 1);
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(a, b, "mul", [](double x, double y) { return x * y; }, 2);
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), needs);
  for (size_t i = 0; i < a.value().size(); ++i) out.value()[i] = a.value()[i] + c;
  if (needs) {
    record(out, [a, out]() {
      if (!out.has_grad()) return;
      a.accumulate_grad(out.grad());
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), needs);
  for (size_t i = 0; i < a.value().size(); ++i) out.value()[i] = a.value()[i] * c;
  if (needs) {
    record(out, [a, out, c]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      std::vector<double> da(g.size());
      for (size_t i = 0; i < g.size(); ++i) da[i] = c * g[i];
      a.accumulate_grad(da);
    });
  }
  return out;
}

Tensor Tape::unary_elementwise(const Tensor& a, double (*fwd)(double),
                               double (*dfwd)(double)) {
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(a.rows(), a.cols(), needs);
  for (size_t i = 0; i < a.value().size(); ++i) out.value()[i] = fwd(a.value()[i]);
  if (needs) {
    record(out, [a, out, dfwd]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      std::vector<double> da(g.size());
      for (size_t i = 0; i < g.size(); ++i) da[i] = dfwd(a.value()[i]) * g[i];
      a.accumulate_grad(da);
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Tensor Tape::sigmoid(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return stable_sigmoid(x); },
      [](double x) {
        double s = stable_sigmoid(x);
        return s * (1.0 - s);
      });
}

Tensor Tape::exp(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Tensor Tape::softplus(const Tensor& a) {
  return unary_elementwise(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x) { return stable_sigmoid(x); });
}

Tensor Tape::square(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

bool cholesky_factor(const std::vector<double>& a, int n, std::vector<double>& l,
                     double* smallest_pivot) {
  l.assign(static_cast<size_t>(n) * n, 0.0);
  double min_pivot = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        s -= l[static_cast<size_t>(i) * n + k] * l[static_cast<size_t>(j) * n + k];
      if (i == j) {
        if (s < min_pivot) min_pivot = s;
        if (s <= 0.0 || !std::isfinite(s)) {
          if (smallest_pivot) *smallest_pivot = min_pivot;
          return false;
        }
        l[static_cast<size_t>(i) * n + j] = std::sqrt(s);
      } else {
        l[static_cast<size_t>(i) * n + j] = s / l[static_cast<size_t>(j) * n + j];
      }
    }
  }
  if (smallest_pivot) *smallest_pivot = min_pivot;
  return true;
}

namespace {

// A^-1 for SPD A from its Cholesky factor: solve L L^T X = I column-wise.
std::vector<double> spd_inverse_from_cholesky(const std::vector<double>& l, int n) {
  std::vector<double> inv(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> y(n), x(n);
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < n; ++i) {
      double s = (i == col) ? 1.0 : 0.0;
      for (int k = 0; k < i; ++k) s -= l[static_cast<size_t>(i) * n + k] * y[k];
      y[i] = s / l[static_cast<size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[i];
      for (int k = i + 1; k < n; ++k) s -= l[static_cast<size_t>(k) * n + i] * x[k];
      x[i] = s / l[static_cast<size_t>(i) * n + i];
    }
    for (int i = 0; i < n; ++i) inv[static_cast<size_t>(i) * n + col] = x[i];
  }
  return inv;
}

}  // namespace

Tensor Tape::mat_inverse(const Tensor& a) {
  if (a.rows() != a.cols()) {
    throw DimensionError("mat_inverse: matrix not square: " + a.shape_str());
  }
  const int n = a.rows();
  // Factor the symmetric part so the op is a genuine function of the full
  // matrix; callers pass symmetric-by-construction inputs where this is the
  // identity up to rounding.
  std::vector<double> sym(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      sym[static_cast<size_t>(i) * n + j] = 0.5 * (a(i, j) + a(j, i));
  std::vector<double> l;
  double pivot = 0.0;
  std::vector<double> work = sym;
  bool ok = cholesky_factor(work, n, l, &pivot);
  double eps = 1e-9;
  while (!ok && eps <= 1e-3) {
    work = sym;
    for (int i = 0; i < n; ++i) work[static_cast<size_t>(i) * n + i] += eps;
    ok = cholesky_factor(work, n, l, &pivot);
    eps *= 10.0;
  }
  if (!ok) {
    throw SingularMatrixError(
        "mat_inverse: Cholesky failed after jitter escalation, smallest pivot " +
            std::to_string(pivot),
        pivot);
  }
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(n, n, needs);
  out.value() = spd_inverse_from_cholesky(l, n);
  if (needs) {
    record(out, [a, out, n]() {
      if (!out.has_grad()) return;
      // M = -Y^T G Y^T with Y = A^-1, then the symmetric projection
      // (M + M^T)/2 to chain through the symmetrization of the input.
      const std::vector<double>& g = out.grad();
      const std::vector<double>& y = out.value();
      std::vector<double> tmp(static_cast<size_t>(n) * n, 0.0);   // Y^T G
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
          const double yv = y[static_cast<size_t>(k) * n + i];
          for (int j = 0; j < n; ++j)
            tmp[static_cast<size_t>(i) * n + j] += yv * g[static_cast<size_t>(k) * n + j];
        }
      std::vector<double> m(static_cast<size_t>(n) * n, 0.0);  // -(Y^T G) Y^T
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
          const double tv = tmp[static_cast<size_t>(i) * n + k];
          for (int j = 0; j < n; ++j)
            m[static_cast<size_t>(i) * n + j] -= tv * y[static_cast<size_t>(j) * n + k];
        }
      std::vector<double> da(static_cast<size_t>(n) * n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          da[static_cast<size_t>(i) * n + j] =
              0.5 * (m[static_cast<size_t>(i) * n + j] + m[static_cast<size_t>(j) * n + i]);
      a.accumulate_grad(da);
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(1, 1, needs);
  double s = 0.0;
  for (double v : a.value()) s += v;
  out.value()[0] = s;
  if (needs) {
    record(out, [a, out]() {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      std::vector<double> da(a.value().size(), g);
      a.accumulate_grad(da);
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw DimensionError("concat_cols: no operands");
  }
  const int m = parts.front().rows();
  int total = 0;
  bool needs = false;
  for (const Tensor& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch: " + parts.front().shape_str() +
                           " vs " + p.shape_str());
    }
    total += p.cols();
    needs = needs || p.requires_grad();
  }
  needs = needs && grad_enabled_;
  Tensor out = make_output(m, total, needs);
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.cols(); ++j) out.at(i, off + j) = p(i, j);
    off += p.cols();
  }
  if (needs) {
    record(out, [parts, out, m, total]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      int off2 = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) {
          std::vector<double> dp(p.value().size());
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < p.cols(); ++j)
              dp[static_cast<size_t>(i) * p.cols() + j] =
                  g[static_cast<size_t>(i) * total + off2 + j];
          p.accumulate_grad(dp);
        }
        off2 += p.cols();
      }
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, int col0, int ncols) {
  if (col0 < 0 || ncols < 0 || col0 + ncols > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(col0) + "," +
                         std::to_string(col0 + ncols) + ") outside " + a.shape_str());
  }
  const int m = a.rows();
  bool needs = grad_enabled_ && a.requires_grad();
  Tensor out = make_output(m, ncols, needs);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < ncols; ++j) out.at(i, j) = a(i, col0 + j);
  if (needs) {
    record(out, [a, out, col0, ncols, m]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      std::vector<double> da(a.value().size(), 0.0);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < ncols; ++j)
          da[static_cast<size_t>(i) * a.cols() + col0 + j] =
              g[static_cast<size_t>(i) * ncols + j];
      a.accumulate_grad(da);
    });
  }
  return out;
}

Tensor Tape::diag_embed(const Tensor& rowvec) {
  if (rowvec.rows() != 1) {
    throw DimensionError("diag_embed: expected row vector, got " + rowvec.shape_str());
  }
  const int n = rowvec.cols();
  bool needs = grad_enabled_ && rowvec.requires_grad();
  Tensor out = make_output(n, n, needs);
  for (int i = 0; i < n; ++i) out.at(i, i) = rowvec(0, i);
  if (needs) {
    record(out, [rowvec, out, n]() {
      if (!out.has_grad()) return;
      const std::vector<double>& g = out.grad();
      std::vector<double> dv(n);
      for (int i = 0; i < n; ++i) dv[i] = g[static_cast<size_t>(i) * n + i];
      rowvec.accumulate_grad(dv);
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw ContractError("backward: loss must be 1x1, got " + loss.shape_str());
  }
  // Reset intermediate grads so repeated backward calls accumulate into
  // leaves only. Leaves are never op outputs.
  for (Op& op : ops_) op.out.impl_->grad.clear();
  loss.seed_grad(1.0);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->backward();
  }
}

}  // namespace adaptkf
