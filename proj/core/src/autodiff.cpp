#include "hdnet/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "hdnet/error.hpp"
#include "hdnet/params.hpp"

namespace hdnet::ad {

namespace {

constexpr const char* kModule = "autodiff";

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(kModule, std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
  throw ShapeError(kModule, std::string(op) + ": shape " + a.str() + " " + why);
}

// Inner-dimension panel size; a panel of B stays cache resident while every
// row of A streams past it. Blocking never changes the order in which terms
// are added into an output element (p ascending), so results are identical
// to the naive loop.
constexpr std::size_t kPanel = 96;

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t p0 = 0; p0 < k; p0 += kPanel) {
    const std::size_t p1 = std::min(k, p0 + kPanel);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      double* c0 = c + i * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      const double* a0 = a + i * k;
      const double* a1 = a0 + k;
      const double* a2 = a1 + k;
      const double* a3 = a2 + k;
      for (std::size_t p = p0; p < p1; ++p) {
        const double s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double bj = bp[j];
          c0[j] += s0 * bj;
          c1[j] += s1 * bj;
          c2[j] += s2 * bj;
          c3[j] += s3 * bj;
        }
      }
    }
    for (; i < m; ++i) {
      double* ci = c + i * n;
      const double* ai = a + i * k;
      for (std::size_t p = p0; p < p1; ++p) {
        const double s = ai[p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
      }
    }
  }
}

// G += A^T * D, A: m x k, D: m x n, G: k x n.
void gemm_tn(const double* a, const double* d, double* g, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t p0 = 0; p0 < k; p0 += kPanel) {
    const std::size_t p1 = std::min(k, p0 + kPanel);
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * k;
      const double* di = d + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const double s = ai[p];
        double* gp = g + p * n;
        for (std::size_t j = 0; j < n; ++j) gp[j] += s * di[j];
      }
    }
  }
}

Matrix transposed(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  }
  return t;
}

void axpy(Matrix& dst, const Matrix& src, double s = 1.0) {
  double* d = dst.data();
  const double* x = src.data();
  const std::size_t n = dst.size();
  if (s == 1.0) {
    for (std::size_t i = 0; i < n; ++i) d[i] += x[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) d[i] += s * x[i];
  }
}

std::uint64_t hash_indices(const std::vector<std::uint32_t>& idx) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ idx.size();
  for (std::uint32_t v : idx) {
    h ^= v;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// ---------------------------------------------------------------------------

std::string Shape::str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : shape_{rows, cols}, data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError(kModule, "matrix data size " + std::to_string(data_.size()) +
                                  " does not match " + shape_.str());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError(kModule, "ragged rows in Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

const Matrix& Value::value() const { return tape_->value(id_); }
const Matrix& Value::grad() const { return tape_->grad(id_); }
bool Value::requires_grad() const { return tape_->requires_grad(id_); }

double Value::item() const {
  const auto& v = value();
  if (v.size() != 1) shape_fail("item", v.shape(), "is not a scalar");
  return v[0];
}

// ---------------------------------------------------------------------------
// Tape

Value Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, {}, false, true});
  return {this, nodes_.size() - 1};
}

Value Tape::variable(Matrix value) {
  Node node{std::move(value), {}, {}, grad_enabled_, true};
  if (grad_enabled_) node.grad = Matrix(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Value Tape::param(const ParamStore& store, std::size_t index) {
  for (const auto& b : bindings_) {
    if (b.index == index) return {this, b.node};
  }
  const auto& p = store.at(index);
  if (!p.trainable) return constant(p.value);
  Value v = variable(p.value);
  bindings_.push_back({v.id(), index});
  return v;
}

const Matrix& Tape::grad(std::size_t id) const {
  static const Matrix kEmpty;
  return nodes_[id].grad.empty() ? kEmpty : nodes_[id].grad;
}

Matrix* Tape::grad_slot(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Matrix(node.value.rows(), node.value.cols());
  return &node.grad;
}

Value Tape::record(Matrix value, std::initializer_list<Value> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Value>(parents.begin(), parents.size()),
                std::move(backward));
}

Value Tape::record(Matrix value, std::span<const Value> parents, BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, needs, false};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Value root) {
  if (!grad_enabled_) throw Error(ErrorKind::numeric, kModule, "backward on a forward-only tape");
  if (root.value().size() != 1) {
    throw ShapeError(kModule, "backward: root must be a scalar, got " + root.shape().str());
  }
  for (auto& node : nodes_) {
    if (!node.leaf) node.grad = Matrix();
  }
  Matrix* seed = grad_slot(root.id());
  if (!seed) return;
  (*seed)[0] += 1.0;
  if (nodes_[root.id()].leaf) return;
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.leaf || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.value, node.grad);
  }
}

void Tape::accumulate_param_grads(std::vector<Matrix>& sink, double scale) const {
  for (const auto& b : bindings_) {
    const auto& g = nodes_[b.node].grad;
    if (b.index >= sink.size() || !(sink[b.index].shape() == g.shape())) {
      throw ShapeError(kModule, "gradient sink does not match bound parameter layout");
    }
    axpy(sink[b.index], g, scale);
  }
}

void Tape::add_param_grads_to(ParamStore& store) const {
  for (const auto& b : bindings_) axpy(store.at(b.index).grad, nodes_[b.node].grad);
}

void Tape::note_branch(std::uint64_t token) noexcept {
  branch_signature_ ^= token + 0x9e3779b97f4a7c15ULL + (branch_signature_ << 6) +
                       (branch_signature_ >> 2);
}

// ---------------------------------------------------------------------------
// Linear algebra

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  Matrix c(a.rows(), b.cols());
  gemm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols(), false);
  return c;
}

Value matmul(Value a, Value b) {
  Matrix out = matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    if (Matrix* ga = t.grad_slot(ia)) {
      const Matrix bt = transposed(B);
      gemm_nn(g.data(), bt.data(), ga->data(), g.rows(), g.cols(), A.cols(), true);
    }
    if (Matrix* gb = t.grad_slot(ib)) {
      gemm_tn(A.data(), g.data(), gb->data(), A.rows(), A.cols(), g.cols());
    }
  });
}

Value matmul_nt(Value a, Value b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av.shape(), bv.shape());
  const Matrix bt = transposed(bv);
  Matrix out(av.rows(), bv.rows());
  gemm_nn(av.data(), bt.data(), out.data(), av.rows(), av.cols(), bv.rows(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    if (Matrix* ga = t.grad_slot(ia)) {
      gemm_nn(g.data(), B.data(), ga->data(), g.rows(), g.cols(), B.cols(), true);
    }
    if (Matrix* gb = t.grad_slot(ib)) {
      // dB = g^T A
      gemm_tn(g.data(), A.data(), gb->data(), g.rows(), g.cols(), A.cols());
    }
  });
}

Value transpose(Value a) {
  Matrix out = transposed(a.value());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) axpy(*ga, transposed(g));
  });
}

Value affine(Value x, Value weight, Value bias) {
  const Matrix& X = x.value();
  const Matrix& W = weight.value();
  const Matrix& b = bias.value();
  if (X.cols() != W.rows()) shape_fail("affine", X.shape(), W.shape());
  if (b.rows() != 1 || b.cols() != W.cols()) shape_fail("affine bias", b.shape(), W.shape());
  Matrix out(X.rows(), W.cols());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    std::copy(b.data(), b.data() + b.cols(), out.row(r).data());
  }
  gemm_nn(X.data(), W.data(), out.data(), X.rows(), X.cols(), W.cols(), true);
  const std::size_t ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, weight, bias}, [ix, iw, ib](Tape& t, const Matrix&, const Matrix& g) {
        const Matrix& X = t.value(ix);
        const Matrix& W = t.value(iw);
        if (Matrix* gx = t.grad_slot(ix)) {
          const Matrix wt = transposed(W);
          gemm_nn(g.data(), wt.data(), gx->data(), g.rows(), g.cols(), W.rows(), true);
        }
        if (Matrix* gw = t.grad_slot(iw)) {
          gemm_tn(X.data(), g.data(), gw->data(), X.rows(), X.cols(), g.cols());
        }
        if (Matrix* gb = t.grad_slot(ib)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            const double* gr = g.row(r).data();
            double* out = gb->data();
            for (std::size_t c = 0; c < g.cols(); ++c) out[c] += gr[c];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise

Value add(Value a, Value b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (!(A.shape() == B.shape())) shape_fail("add", A.shape(), B.shape());
  Matrix out = A;
  axpy(out, B);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) axpy(*ga, g);
    if (Matrix* gb = t.grad_slot(ib)) axpy(*gb, g);
  });
}

Value sub(Value a, Value b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (!(A.shape() == B.shape())) shape_fail("sub", A.shape(), B.shape());
  Matrix out = A;
  axpy(out, B, -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) axpy(*ga, g);
    if (Matrix* gb = t.grad_slot(ib)) axpy(*gb, g, -1.0);
  });
}

Value mul(Value a, Value b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (!(A.shape() == B.shape())) shape_fail("mul", A.shape(), B.shape());
  Matrix out(A.rows(), A.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    if (Matrix* ga = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
    }
    if (Matrix* gb = t.grad_slot(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
    }
  });
}

Value scale(Value a, double s) {
  Matrix out = a.value();
  for (auto& x : out.values()) x *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) axpy(*ga, g, s);
  });
}

Value add_scalar(Value a, double s) {
  Matrix out = a.value();
  for (auto& x : out.values()) x += s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) axpy(*ga, g);
  });
}

Value add_row(Value a, Value bias) {
  const Matrix& A = a.value();
  const Matrix& b = bias.value();
  if (b.rows() != 1 || b.cols() != A.cols()) shape_fail("add_row", A.shape(), b.shape());
  Matrix out = A;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* o = out.row(r).data();
    for (std::size_t c = 0; c < out.cols(); ++c) o[c] += b[c];
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {a, bias}, [ia, ib](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) axpy(*ga, g);
    if (Matrix* gb = t.grad_slot(ib)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
      }
    }
  });
}

double gelu(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

Value gelu(Value a) {
  const Matrix& A = a.value();
  Matrix out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = gelu(A[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix&, const Matrix& g) {
    Matrix* ga = t.grad_slot(ia);
    if (!ga) return;
    const Matrix& A = t.value(ia);
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double x = A[i];
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      (*ga)[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
    }
  });
}

Value exp(Value a) {
  Matrix out = a.value();
  for (auto& x : out.values()) x = std::exp(x);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix& y, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
    }
  });
}

Value log(Value a) {
  Matrix out = a.value();
  for (auto& x : out.values()) x = std::log(x);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) {
      const Matrix& A = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / A[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization and softmax

Value layer_norm(Value x, Value gain, Value bias, double eps) {
  const Matrix& X = x.value();
  const Matrix& G = gain.value();
  const Matrix& B = bias.value();
  const std::size_t n = X.cols();
  if (G.rows() != 1 || G.cols() != n) shape_fail("layer_norm gain", X.shape(), G.shape());
  if (B.rows() != 1 || B.cols() != n) shape_fail("layer_norm bias", X.shape(), B.shape());

  Matrix xhat(X.rows(), n);
  std::vector<double> inv_std(X.rows());
  Matrix out(X.rows(), n);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mu) * is;
      xhat(r, c) = h;
      out(r, c) = h * G[c] + B[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix&,
                                                                        const Matrix& g) {
        const Matrix& G = t.value(ig);
        const std::size_t n = g.cols();
        if (Matrix* gg = t.grad_slot(ig)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < n; ++c) (*gg)[c] += g(r, c) * xhat(r, c);
          }
        }
        if (Matrix* gb = t.grad_slot(ib)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < n; ++c) (*gb)[c] += g(r, c);
          }
        }
        if (Matrix* gx = t.grad_slot(ix)) {
          std::vector<double> dh(n);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              dh[c] = g(r, c) * G[c];
              mean_dh += dh[c];
              mean_dh_h += dh[c] * xhat(r, c);
            }
            mean_dh /= static_cast<double>(n);
            mean_dh_h /= static_cast<double>(n);
            for (std::size_t c = 0; c < n; ++c) {
              (*gx)(r, c) += inv_std[r] * (dh[c] - mean_dh - xhat(r, c) * mean_dh_h);
            }
          }
        }
      });
}

Value softmax_rows(Value a) {
  const Matrix& A = a.value();
  Matrix out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const auto row = A.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) {
      out(r, c) = std::exp(row[c] - mx);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) /= total;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix& y, const Matrix& g) {
    Matrix* ga = t.grad_slot(ia);
    if (!ga) return;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) (*ga)(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Value log_softmax_rows(Value a) {
  const Matrix& A = a.value();
  Matrix out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const auto row = A.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) = row[c] - lse;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Matrix& y, const Matrix& g) {
    Matrix* ga = t.grad_slot(ia);
    if (!ga) return;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) total += g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) {
        (*ga)(r, c) += g(r, c) - std::exp(y(r, c)) * total;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Value mean(Value a, Axis axis) {
  const Matrix& A = a.value();
  if (A.size() == 0) shape_fail("mean", A.shape(), "is empty");
  const std::size_t ia = a.id();
  if (axis == Axis::rows) {
    Matrix out(1, A.cols());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      for (std::size_t c = 0; c < A.cols(); ++c) out[c] += A(r, c);
    }
    const double inv = 1.0 / static_cast<double>(A.rows());
    for (auto& v : out.values()) v *= inv;
    return a.tape().record(std::move(out), {a}, [ia, inv](Tape& t, const Matrix&, const Matrix& g) {
      if (Matrix* ga = t.grad_slot(ia)) {
        for (std::size_t r = 0; r < ga->rows(); ++r) {
          for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g[c] * inv;
        }
      }
    });
  }
  Matrix out(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double s = 0.0;
    for (double v : A.row(r)) s += v;
    out[r] = s / static_cast<double>(A.cols());
  }
  const double inv = 1.0 / static_cast<double>(A.cols());
  return a.tape().record(std::move(out), {a}, [ia, inv](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) {
      for (std::size_t r = 0; r < ga->rows(); ++r) {
        for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g[r] * inv;
      }
    }
  });
}

Value sum_all(Value a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Matrix::scalar(s), {a}, [ia](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) {
      for (auto& v : ga->values()) v += g[0];
    }
  });
}

Value mean_all(Value a) {
  const std::size_t n = a.value().size();
  if (n == 0) shape_fail("mean_all", a.shape(), "is empty");
  return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Value segment_max(Value a, std::size_t group) {
  const Matrix& A = a.value();
  if (group == 0 || A.rows() % group != 0) {
    shape_fail("segment_max", A.shape(), "rows not divisible by group " + std::to_string(group));
  }
  const std::size_t segments = A.rows() / group;
  const std::size_t cols = A.cols();
  Matrix out(segments, cols);
  std::vector<std::uint32_t> arg(segments * cols);
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t base = s * group;
    double* o = out.row(s).data();
    std::uint32_t* ai = arg.data() + s * cols;
    const double* first = A.row(base).data();
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = first[c];
      ai[c] = static_cast<std::uint32_t>(base);
    }
    for (std::size_t r = base + 1; r < base + group; ++r) {
      const double* row = A.row(r).data();
      for (std::size_t c = 0; c < cols; ++c) {
        if (row[c] > o[c]) {
          o[c] = row[c];
          ai[c] = static_cast<std::uint32_t>(r);
        }
      }
    }
  }
  a.tape().note_branch(hash_indices(arg));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a},
                         [ia, arg = std::move(arg)](Tape& t, const Matrix&, const Matrix& g) {
                           Matrix* ga = t.grad_slot(ia);
                           if (!ga) return;
                           const std::size_t cols = g.cols();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             (*ga)(arg[i], i % cols) += g[i];
                           }
                         });
}

Value max_rows(Value a) { return segment_max(a, a.rows()); }

// ---------------------------------------------------------------------------
// Structural

Value concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw ShapeError(kModule, "concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].shape(), p.shape());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return parts[0].tape().record(
      std::move(out), parts,
      [ids = std::move(ids), offsets = std::move(offsets)](Tape& t, const Matrix&, const Matrix& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
          Matrix* gp = t.grad_slot(ids[k]);
          if (!gp) continue;
          for (std::size_t r = 0; r < gp->rows(); ++r) {
            const double* src = g.row(r).data() + offsets[k];
            double* dst = gp->row(r).data();
            for (std::size_t c = 0; c < gp->cols(); ++c) dst[c] += src[c];
          }
        }
      });
}

Value concat_cols(std::initializer_list<Value> parts) {
  return concat_cols(std::span<const Value>(parts.begin(), parts.size()));
}

Value slice_cols(Value a, std::size_t begin, std::size_t count) {
  const Matrix& A = a.value();
  if (begin + count > A.cols() || count == 0) {
    shape_fail("slice_cols", A.shape(),
               "cannot take columns [" + std::to_string(begin) + ", " +
                   std::to_string(begin + count) + ")");
  }
  Matrix out(A.rows(), count);
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double* src = A.row(r).data() + begin;
    std::copy(src, src + count, out.row(r).data());
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, begin](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double* dst = ga->row(r).data() + begin;
        const double* src = g.row(r).data();
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
      }
    }
  });
}

Value gather_rows(Value a, std::span<const std::size_t> rows) {
  const Matrix& A = a.value();
  Matrix out(rows.size(), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) {
      shape_fail("gather_rows", A.shape(), "has no row " + std::to_string(rows[i]));
    }
    std::copy(A.row(rows[i]).begin(), A.row(rows[i]).end(), out.row(i).begin());
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record(std::move(out), {a},
                         [ia, idx = std::move(idx)](Tape& t, const Matrix&, const Matrix& g) {
                           Matrix* ga = t.grad_slot(ia);
                           if (!ga) return;
                           const std::size_t cols = g.cols();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             double* dst = ga->row(idx[i]).data();
                             const double* src = g.row(i).data();
                             for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                           }
                         });
}

Value row_scale(Value a, Value scale) {
  const Matrix& A = a.value();
  const Matrix& S = scale.value();
  if (S.rows() != A.rows() || S.cols() != 1) shape_fail("row_scale", A.shape(), S.shape());
  Matrix out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) = A(r, c) * S[r];
  }
  const std::size_t ia = a.id(), is = scale.id();
  return a.tape().record(std::move(out), {a, scale}, [ia, is](Tape& t, const Matrix&, const Matrix& g) {
    const Matrix& A = t.value(ia);
    const Matrix& S = t.value(is);
    if (Matrix* ga = t.grad_slot(ia)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, c) += g(r, c) * S[r];
      }
    }
    if (Matrix* gs = t.grad_slot(is)) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * A(r, c);
        (*gs)[r] += dot;
      }
    }
  });
}

Value select(Value a, std::size_t r, std::size_t c) {
  const Matrix& A = a.value();
  if (r >= A.rows() || c >= A.cols()) {
    shape_fail("select", A.shape(), "has no element (" + std::to_string(r) + ", " + std::to_string(c) + ")");
  }
  const std::size_t ia = a.id();
  return a.tape().record(Matrix::scalar(A(r, c)), {a}, [ia, r, c](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* ga = t.grad_slot(ia)) (*ga)(r, c) += g[0];
  });
}

Value straight_through(Value soft, Matrix hard) {
  if (!(soft.shape() == hard.shape())) shape_fail("straight_through", soft.shape(), hard.shape());
  std::uint64_t token = 0;
  for (double h : hard.values()) token = token * 31 + (h > 0.5 ? 1 : 0);
  soft.tape().note_branch(token);
  const std::size_t is = soft.id();
  return soft.tape().record(std::move(hard), {soft}, [is](Tape& t, const Matrix&, const Matrix& g) {
    if (Matrix* gs = t.grad_slot(is)) axpy(*gs, g);
  });
}

Value adaptive_edge_response(Value hidden, Value point_proj, Value coord_delta, Value coord_weight,
                             std::span<const std::size_t> source,
                             std::span<const std::size_t> target) {
  const Matrix& H = hidden.value();
  const Matrix& P = point_proj.value();
  const Matrix& D = coord_delta.value();
  const Matrix& W = coord_weight.value();
  const std::size_t edges = H.rows();
  const std::size_t m = H.cols();
  const std::size_t width = P.cols();
  if (m == 0 || width % m != 0 || W.cols() != width || D.rows() != edges || D.cols() != W.rows() ||
      source.size() != edges || target.size() != edges) {
    shape_fail("adaptive_edge_response", H.shape(), P.shape());
  }
  for (std::size_t e = 0; e < edges; ++e) {
    if (source[e] >= P.rows() || target[e] >= P.rows()) {
      shape_fail("adaptive_edge_response", P.shape(), "indexed out of range");
    }
  }
  const std::size_t n = width / m;
  const std::size_t q = D.cols();

  // u_e = P[target] - P[source] + d_e W, the edge's kernel product in block form.
  auto edge_blocks = [](const Matrix& P, const Matrix& D, const Matrix& W, std::size_t e, std::size_t s,
                        std::size_t t, std::vector<double>& u) {
    const double* pt = P.row(t).data();
    const double* ps = P.row(s).data();
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = pt[k] - ps[k];
    const double* de = D.row(e).data();
    for (std::size_t c = 0; c < D.cols(); ++c) {
      const double dc = de[c];
      const double* wc = W.row(c).data();
      for (std::size_t k = 0; k < u.size(); ++k) u[k] += dc * wc[k];
    }
  };

  Matrix result(edges, n);
  std::vector<double> u(width);
  for (std::size_t e = 0; e < edges; ++e) {
    edge_blocks(P, D, W, e, source[e], target[e], u);
    const double* he = H.row(e).data();
    double* r = result.row(e).data();
    for (std::size_t p = 0; p < m; ++p) {
      const double w = he[p];
      const double* up = u.data() + p * n;
      for (std::size_t o = 0; o < n; ++o) r[o] += w * up[o];
    }
  }

  std::vector<std::size_t> src(source.begin(), source.end());
  std::vector<std::size_t> dst(target.begin(), target.end());
  const std::size_t ih = hidden.id(), ip = point_proj.id(), id = coord_delta.id(), iw = coord_weight.id();
  return hidden.tape().record(
      std::move(result), {hidden, point_proj, coord_delta, coord_weight},
      [=, src = std::move(src), dst = std::move(dst)](Tape& t, const Matrix&, const Matrix& g) {
        const Matrix& H = t.value(ih);
        const Matrix& P = t.value(ip);
        const Matrix& D = t.value(id);
        const Matrix& W = t.value(iw);
        Matrix* gh = t.grad_slot(ih);
        Matrix* gp = t.grad_slot(ip);
        Matrix* gd = t.grad_slot(id);
        Matrix* gw = t.grad_slot(iw);
        std::vector<double> u(width), gu(width);
        for (std::size_t e = 0; e < H.rows(); ++e) {
          const double* ge = g.row(e).data();
          const double* he = H.row(e).data();
          if (gh) {
            edge_blocks(P, D, W, e, src[e], dst[e], u);
            for (std::size_t p = 0; p < m; ++p) {
              const double* up = u.data() + p * n;
              double s = 0.0;
              for (std::size_t o = 0; o < n; ++o) s += ge[o] * up[o];
              (*gh)(e, p) += s;
            }
          }
          if (!gp && !gd && !gw) continue;
          for (std::size_t p = 0; p < m; ++p) {
            double* gup = gu.data() + p * n;
            for (std::size_t o = 0; o < n; ++o) gup[o] = he[p] * ge[o];
          }
          if (gp) {
            double* pt = gp->row(dst[e]).data();
            for (std::size_t k = 0; k < width; ++k) pt[k] += gu[k];
            double* ps = gp->row(src[e]).data();
            for (std::size_t k = 0; k < width; ++k) ps[k] -= gu[k];
          }
          const double* de = D.row(e).data();
          for (std::size_t c = 0; c < q; ++c) {
            if (gw) {
              double* wc = gw->row(c).data();
              for (std::size_t k = 0; k < width; ++k) wc[k] += de[c] * gu[k];
            }
            if (gd) {
              const double* wc = W.row(c).data();
              double s = 0.0;
              for (std::size_t k = 0; k < width; ++k) s += gu[k] * wc[k];
              (*gd)(e, c) += s;
            }
          }
        }
      });
}

}  // namespace hdnet::ad
