#include "mlvae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace mlvae::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

Tape& tape_of(Var v, const char* op) {
  if (!v.valid()) throw std::logic_error(std::string(op) + ": unbound Var");
  return *v.tape();
}

void require_rank2(Var v, const char* op) {
  if (v.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                     shape_to_string(v.shape()));
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

// Elementwise map y = f(x) with dy/dx = df(x, y).
template <typename F, typename DF>
Var unary(const char* op, Var x, F f, DF df) {
  Tape& tape = tape_of(x, op);
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return tape.record(op, std::move(out), {x}, [x, df](Tape& t, std::size_t node) {
    Tensor* gx = t.grad_sink(x);
    if (!gx) return;
    const Tensor& g = t.node_gradient(node);
    const Tensor& y = t.node_value(node);
    const Tensor& xv = t.value(x);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * df(xv[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, "matmul");
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.value().cols() != b.value().rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out({a.value().rows(), b.value().cols()});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  return tape.record("matmul", std::move(out), {a, b}, [a, b](Tape& t, std::size_t node) {
    auto g = as_matrix(t.node_gradient(node));
    if (Tensor* ga = t.grad_sink(a)) as_matrix(*ga).noalias() += g * as_matrix(t.value(b)).transpose();
    if (Tensor* gb = t.grad_sink(b)) as_matrix(*gb).noalias() += as_matrix(t.value(a)).transpose() * g;
  });
}

Var affine(Var x, Var w, Var bias) {
  Tape& tape = tape_of(x, "affine");
  require_rank2(x, "affine");
  require_rank2(w, "affine");
  const auto in = x.value().cols();
  const auto out_dim = w.value().cols();
  if (w.value().rows() != in) {
    throw ShapeError("affine: input width " + std::to_string(in) + " does not match weight " +
                     shape_to_string(w.shape()));
  }
  if (bias.value().rank() != 1 || bias.value().size() != out_dim) {
    throw ShapeError("affine: bias " + shape_to_string(bias.shape()) + " does not match output width " +
                     std::to_string(out_dim));
  }
  Tensor out({x.value().rows(), out_dim});
  auto o = as_matrix(out);
  o.noalias() = as_matrix(x.value()) * as_matrix(w.value());
  const auto bvec = Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), static_cast<Eigen::Index>(out_dim));
  o.rowwise() += bvec;
  return tape.record("affine", std::move(out), {x, w, bias}, [x, w, bias](Tape& t, std::size_t node) {
    auto g = as_matrix(t.node_gradient(node));
    if (Tensor* gx = t.grad_sink(x)) as_matrix(*gx).noalias() += g * as_matrix(t.value(w)).transpose();
    if (Tensor* gw = t.grad_sink(w)) as_matrix(*gw).noalias() += as_matrix(t.value(x)).transpose() * g;
    if (Tensor* gb = t.grad_sink(bias)) {
      Eigen::Map<Eigen::RowVectorXd>(gb->data(), g.cols()) += g.colwise().sum();
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, "add");
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape& t, std::size_t node) {
    const Tensor& g = t.node_gradient(node);
    if (Tensor* ga = t.grad_sink(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = t.grad_sink(b)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
  });
}

Var sub(Var a, Var b) {
  Tape& tape = tape_of(a, "sub");
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return tape.record("sub", std::move(out), {a, b}, [a, b](Tape& t, std::size_t node) {
    const Tensor& g = t.node_gradient(node);
    if (Tensor* ga = t.grad_sink(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = t.grad_sink(b)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, "mul");
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return tape.record("mul", std::move(out), {a, b}, [a, b](Tape& t, std::size_t node) {
    const Tensor& g = t.node_gradient(node);
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (Tensor* ga = t.grad_sink(a)) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    if (Tensor* gb = t.grad_sink(b)) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
  });
}

Var scale(Var x, double factor) {
  return unary("scale", x, [factor](double v) { return factor * v; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary("add_scalar", x, [offset](double v) { return v + offset; },
               [](double, double) { return 1.0; });
}

Var neg(Var x) {
  return unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().values()) {
    if (!(v > 0.0)) throw NonFiniteError("log: non-positive argument " + std::to_string(v));
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(Var x) {
  // log sigmoid(v) = -softplus(-v) = min(v, 0) - log1p(exp(-|v|))
  return unary(
      "log_sigmoid", x, [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return 1.0 - stable_sigmoid(v); });
}

Var clamp_min(Var x, double floor) {
  return unary("clamp_min", x, [floor](double v) { return v < floor ? floor : v; },
               [floor](double v, double) { return v < floor ? 0.0 : 1.0; });
}

Var sum(Var x) {
  Tape& tape = tape_of(x, "sum");
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return tape.record("sum", Tensor::scalar(total), {x}, [x](Tape& t, std::size_t node) {
    Tensor* gx = t.grad_sink(x);
    if (!gx) return;
    const double g = t.node_gradient(node)[0];
    for (double& v : gx->values()) v += g;
  });
}

Var mean(Var x) {
  const auto n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var sum_cols(Var x) {
  Tape& tape = tape_of(x, "sum_cols");
  require_rank2(x, "sum_cols");
  const auto rows = x.value().rows();
  const auto cols = x.value().cols();
  Tensor out({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += x.value().at(r, c);
    out[r] = s;
  }
  return tape.record("sum_cols", std::move(out), {x}, [x](Tape& t, std::size_t node) {
    Tensor* gx = t.grad_sink(x);
    if (!gx) return;
    const Tensor& g = t.node_gradient(node);
    const auto cols = gx->cols();
    for (std::size_t r = 0; r < gx->rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gx->at(r, c) += g[r];
  });
}

Var sum_rows(Var x) {
  const std::size_t offsets[2] = {0, x.value().rows()};
  return segment_sum_rows(x, offsets);
}

Var segment_sum_rows(Var x, std::span<const std::size_t> offsets) {
  Tape& tape = tape_of(x, "segment_sum_rows");
  require_rank2(x, "segment_sum_rows");
  const auto rows = x.value().rows();
  const auto cols = x.value().cols();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw ShapeError("segment_sum_rows: offsets must run from 0 to " + std::to_string(rows));
  }
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    if (offsets[g + 1] <= offsets[g]) throw ShapeError("segment_sum_rows: empty or decreasing segment");
  }
  const std::size_t segments = offsets.size() - 1;
  Tensor out({segments, cols});
  for (std::size_t g = 0; g < segments; ++g)
    for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r)
      for (std::size_t c = 0; c < cols; ++c) out.at(g, c) += x.value().at(r, c);
  std::vector<std::size_t> bounds(offsets.begin(), offsets.end());
  return tape.record("segment_sum_rows", std::move(out), {x},
                     [x, bounds = std::move(bounds)](Tape& t, std::size_t node) {
                       Tensor* gx = t.grad_sink(x);
                       if (!gx) return;
                       const Tensor& g = t.node_gradient(node);
                       const auto cols = gx->cols();
                       for (std::size_t s = 0; s + 1 < bounds.size(); ++s)
                         for (std::size_t r = bounds[s]; r < bounds[s + 1]; ++r)
                           for (std::size_t c = 0; c < cols; ++c) gx->at(r, c) += g.at(s, c);
                     });
}

Var gather_rows(Var x, std::span<const std::size_t> index) {
  Tape& tape = tape_of(x, "gather_rows");
  require_rank2(x, "gather_rows");
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  const auto rows = x.value().rows();
  const auto cols = x.value().cols();
  Tensor out({index.size(), cols});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(x.value().data() + index[r] * cols, cols, out.data() + r * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return tape.record("gather_rows", std::move(out), {x}, [x, idx = std::move(idx)](Tape& t, std::size_t node) {
    Tensor* gx = t.grad_sink(x);
    if (!gx) return;
    const Tensor& g = t.node_gradient(node);
    const auto cols = gx->cols();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gx->at(idx[r], c) += g.at(r, c);
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(x, "slice_cols");
  require_rank2(x, "slice_cols");
  const auto rows = x.value().rows();
  const auto cols = x.value().cols();
  if (count == 0 || begin + count > cols) throw ShapeError("slice_cols: column range out of bounds");
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = x.value().at(r, begin + c);
  return tape.record("slice_cols", std::move(out), {x}, [x, begin](Tape& t, std::size_t node) {
    Tensor* gx = t.grad_sink(x);
    if (!gx) return;
    const Tensor& g = t.node_gradient(node);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx->at(r, begin + c) += g.at(r, c);
  });
}

Var concat_cols(Var a, Var b) {
  Tape& tape = tape_of(a, "concat_cols");
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  const auto rows = a.value().rows();
  if (b.value().rows() != rows) throw ShapeError("concat_cols: row counts differ");
  const auto ca = a.value().cols();
  const auto cb = b.value().cols();
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out.at(r, c) = a.value().at(r, c);
    for (std::size_t c = 0; c < cb; ++c) out.at(r, ca + c) = b.value().at(r, c);
  }
  return tape.record("concat_cols", std::move(out), {a, b}, [a, b, ca, cb](Tape& t, std::size_t node) {
    const Tensor& g = t.node_gradient(node);
    Tensor* ga = t.grad_sink(a);
    Tensor* gb = t.grad_sink(b);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (ga) for (std::size_t c = 0; c < ca; ++c) ga->at(r, c) += g.at(r, c);
      if (gb) for (std::size_t c = 0; c < cb; ++c) gb->at(r, c) += g.at(r, ca + c);
    }
  });
}

Var log_softmax_rows(Var x) {
  Tape& tape = tape_of(x, "log_softmax_rows");
  require_rank2(x, "log_softmax_rows");
  const auto rows = x.value().rows();
  const auto cols = x.value().cols();
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double hi = x.value().at(r, 0);
    for (std::size_t c = 1; c < cols; ++c) hi = std::max(hi, x.value().at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x.value().at(r, c) - hi);
    const double lse = hi + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = x.value().at(r, c) - lse;
  }
  return tape.record("log_softmax_rows", std::move(out), {x}, [x](Tape& t, std::size_t node) {
    Tensor* gx = t.grad_sink(x);
    if (!gx) return;
    const Tensor& g = t.node_gradient(node);
    const Tensor& y = t.node_value(node);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) gsum += g.at(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) gx->at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
    }
  });
}

}  // namespace mlvae::ops
