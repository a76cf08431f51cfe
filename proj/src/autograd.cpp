#include "tfcodit/autograd.hpp"

#include "tfcodit/errors.hpp"

#include <cmath>
#include <limits>

namespace tfcodit::ag {

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::ShapeMismatch, what);
}

std::string shape(const Mat& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

}  // namespace

// ---------------------------------------------------------------- ParamStore

Parameter& ParamStore::add(const std::string& name, Mat init, bool trainable) {
  if (index_.count(name)) throw Error(ErrorCode::InvalidConfig, "duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Mat::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  p->trainable = trainable;
  Parameter& ref = *p;
  index_[name] = p.get();
  params_.push_back(std::move(p));
  return ref;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::MissingData, "no parameter named " + name);
  return *it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::MissingData, "no parameter named " + name);
  return *it->second;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero(p->value.rows(), p->value.cols());
}

// --------------------------------------------------------------------- Graph

const Mat& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = p.trainable;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Mat& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::push(Mat value, const std::vector<int>& inputs, BackFn back) {
  Node n;
  n.value = std::move(value);
  for (int id : inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var root) {
  require(root.graph() == this, "backward root from another graph");
  require(root.rows() == 1 && root.cols() == 1, "backward root must be 1x1");
  grad(root.id()).setConstant(1.0);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.needs_grad) continue;
    if (n.back) n.back(*this, id);
    if (n.param != nullptr) nodes_[id].param->grad += nodes_[id].grad;
  }
}

// ------------------------------------------------------------------------ ops

namespace {

Graph& graph_of(Var a) {
  require(a.valid(), "uninitialized Var");
  return *a.graph();
}

void require_same_graph(Var a, Var b) {
  require(a.graph() == b.graph(), "Vars from different graphs");
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  require(a.cols() == b.rows(), "matmul " + shape(a.value()) + " * " + shape(b.value()));
  Graph& g = graph_of(a);
  Mat out;
  out.noalias() = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib).transpose();
    if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * go;
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b);
  require(a.cols() == b.cols(), "matmul_nt " + shape(a.value()) + " * " + shape(b.value()) + "^T");
  Graph& g = graph_of(a);
  Mat out;
  out.noalias() = a.value() * b.value().transpose();
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia).noalias() += go * g.value(ib);
    if (g.needs_grad(ib)) g.grad(ib).noalias() += go.transpose() * g.value(ia);
  });
}

Var transpose(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  return g.push(a.value().transpose(), {ia}, [ia](Graph& g, int self) {
    g.grad(ia) += g.grad(self).transpose();
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "add " + shape(a.value()) + " + " + shape(b.value()));
  Graph& g = graph_of(a);
  const int ia = a.id(), ib = b.id();
  return g.push(a.value() + b.value(), {ia, ib}, [ia, ib](Graph& g, int self) {
    if (g.needs_grad(ia)) g.grad(ia) += g.grad(self);
    if (g.needs_grad(ib)) g.grad(ib) += g.grad(self);
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "sub " + shape(a.value()) + " - " + shape(b.value()));
  Graph& g = graph_of(a);
  const int ia = a.id(), ib = b.id();
  return g.push(a.value() - b.value(), {ia, ib}, [ia, ib](Graph& g, int self) {
    if (g.needs_grad(ia)) g.grad(ia) += g.grad(self);
    if (g.needs_grad(ib)) g.grad(ib) -= g.grad(self);
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "mul " + shape(a.value()) + " * " + shape(b.value()));
  Graph& g = graph_of(a);
  const int ia = a.id(), ib = b.id();
  return g.push(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia) += go.cwiseProduct(g.value(ib));
    if (g.needs_grad(ib)) g.grad(ib) += go.cwiseProduct(g.value(ia));
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  return g.push(a.value() * s, {ia}, [ia, s](Graph& g, int self) {
    g.grad(ia) += g.grad(self) * s;
  });
}

Var add_scalar(Var a, double s) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = a.value().array() + s;
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) { g.grad(ia) += g.grad(self); });
}

Var add_row(Var a, Var b) {
  require_same_graph(a, b);
  require(b.rows() == 1 && b.cols() == a.cols(),
          "add_row " + shape(a.value()) + " + " + shape(b.value()));
  Graph& g = graph_of(a);
  const int ia = a.id(), ib = b.id();
  Mat out = a.value();
  out.rowwise() += b.value().row(0);
  return g.push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ia)) g.grad(ia) += go;
    if (g.needs_grad(ib)) g.grad(ib) += go.colwise().sum();
  });
}

Var mul_row(Var a, Var b) {
  require_same_graph(a, b);
  require(b.rows() == 1 && b.cols() == a.cols(),
          "mul_row " + shape(a.value()) + " * " + shape(b.value()));
  Graph& g = graph_of(a);
  const int ia = a.id(), ib = b.id();
  Mat out = a.value().array().rowwise() * b.value().row(0).array();
  return g.push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Mat& go = g.grad(self);
    if (g.needs_grad(ia)) {
      g.grad(ia).array() += go.array().rowwise() * g.value(ib).row(0).array();
    }
    if (g.needs_grad(ib)) g.grad(ib) += go.cwiseProduct(g.value(ia)).colwise().sum();
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows out of range");
  Graph& g = graph_of(a);
  const int ia = a.id();
  return g.push(a.value().middleRows(start, count), {ia}, [ia, start, count](Graph& g, int self) {
    g.grad(ia).middleRows(start, count) += g.grad(self);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  Graph& g = graph_of(a);
  const int ia = a.id();
  return g.push(a.value().middleCols(start, count), {ia}, [ia, start, count](Graph& g, int self) {
    g.grad(ia).middleCols(start, count) += g.grad(self);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Graph& g = graph_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  std::vector<int> ids;
  for (const Var& p : parts) {
    require(p.graph() == &g && p.cols() == cols, "concat_rows column mismatch");
    rows += p.rows();
    ids.push_back(p.id());
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return g.push(std::move(out), ids, [ids](Graph& g, int self) {
    Eigen::Index r = 0;
    for (int id : ids) {
      const Eigen::Index n = g.value(id).rows();
      if (g.needs_grad(id)) g.grad(id) += g.grad(self).middleRows(r, n);
      r += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Graph& g = graph_of(parts.front());
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  std::vector<int> ids;
  for (const Var& p : parts) {
    require(p.graph() == &g && p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
    ids.push_back(p.id());
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return g.push(std::move(out), ids, [ids](Graph& g, int self) {
    Eigen::Index c = 0;
    for (int id : ids) {
      const Eigen::Index n = g.value(id).cols();
      if (g.needs_grad(id)) g.grad(id) += g.grad(self).middleCols(c, n);
      c += n;
    }
  });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  require(rows * cols == a.value().size(), "reshape size mismatch");
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = Eigen::Map<const Mat>(a.value().data(), rows, cols);
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    Mat& gi = g.grad(ia);
    Eigen::Map<Mat>(gi.data(), gi.rows(), gi.cols()) +=
        Eigen::Map<const Mat>(g.grad(self).data(), gi.rows(), gi.cols());
  });
}

Var repeat_rows(Var a, int times) {
  require(times >= 1, "repeat_rows times < 1");
  Graph& g = graph_of(a);
  const int ia = a.id();
  const Mat& v = a.value();
  Mat out(v.rows() * times, v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (int k = 0; k < times; ++k) out.row(r * times + k) = v.row(r);
  }
  return g.push(std::move(out), {ia}, [ia, times](Graph& g, int self) {
    Mat& gi = g.grad(ia);
    const Mat& go = g.grad(self);
    for (Eigen::Index r = 0; r < gi.rows(); ++r) {
      for (int k = 0; k < times; ++k) gi.row(r) += go.row(r * times + k);
    }
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  Graph& g = graph_of(table);
  const Mat& t = table.value();
  Mat out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= t.rows()) {
      throw Error(ErrorCode::UnknownToken, "row id " + std::to_string(ids[i]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
  }
  const int it = table.id();
  return g.push(std::move(out), {it}, [it, ids](Graph& g, int self) {
    Mat& gt = g.grad(it);
    const Mat& go = g.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += go.row(static_cast<Eigen::Index>(i));
  });
}

Var gelu(Var a) {
  // tanh approximation
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = a.value().unaryExpr([](double x) {
    return 0.5 * x * (1.0 + std::tanh(k * (x + c * x * x * x)));
  });
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Mat& x = g.value(ia);
    Mat d = x.unaryExpr([](double v) {
      const double u = k * (v + c * v * v * v);
      const double th = std::tanh(u);
      const double du = k * (1.0 + 3.0 * c * v * v);
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
    });
    g.grad(ia) += g.grad(self).cwiseProduct(d);
  });
}

Var silu(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = a.value().unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Mat d = g.value(ia).unaryExpr([](double v) {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 + v * (1.0 - s));
    });
    g.grad(ia) += g.grad(self).cwiseProduct(d);
  });
}

Var exp(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = a.value().array().exp();
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    g.grad(ia) += g.grad(self).cwiseProduct(g.value(self));
  });
}

Var square(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = a.value().array().square();
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    g.grad(ia) += 2.0 * g.grad(self).cwiseProduct(g.value(ia));
  });
}

Var abs(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out = a.value().cwiseAbs();
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    const Mat sign = g.value(ia).unaryExpr([](double v) {
      return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    });
    g.grad(ia) += g.grad(self).cwiseProduct(sign);
  });
}

Var layer_norm(Var a, double eps) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  const Mat& x = a.value();
  const Eigen::Index n = x.cols();
  Mat out(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  return g.push(std::move(out), {ia}, [ia, inv_std](Graph& g, int self) {
    const Mat& y = g.value(self);
    const Mat& go = g.grad(self);
    Mat& gi = g.grad(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double mg = go.row(r).mean();
      const double mgy = go.row(r).dot(y.row(r)) / static_cast<double>(y.cols());
      gi.row(r).array() += inv_std(r) * (go.row(r).array() - mg - y.row(r).array() * mgy);
    }
  });
}

Var softmax_rows(Var a, const Mat* mask) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat z = a.value();
  if (mask != nullptr) {
    require(mask->rows() == z.rows() && mask->cols() == z.cols(), "softmax mask shape");
    z += *mask;
  }
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    require(std::isfinite(m), "softmax row fully masked");
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      // vectorized exp clamps -inf to a denormal; masked keys must be exactly 0
      z(r, c) = std::isinf(z(r, c)) ? 0.0 : std::exp(z(r, c) - m);
    }
    z.row(r) /= z.row(r).sum();
  }
  return g.push(std::move(z), {ia}, [ia](Graph& g, int self) {
    const Mat& p = g.value(self);
    const Mat& go = g.grad(self);
    Mat& gi = g.grad(ia);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double dot = go.row(r).dot(p.row(r));
      gi.row(r).array() += p.row(r).array() * (go.row(r).array() - dot);
    }
  });
}

Var rotate_pairs(Var a, const Mat& angles) {
  const Mat& x = a.value();
  require(x.cols() % 2 == 0 && angles.rows() == x.rows() && angles.cols() == x.cols() / 2,
          "rotate_pairs angle table " + shape(angles) + " for " + shape(x));
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat cs = angles.array().cos();
  Mat sn = angles.array().sin();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index k = 0; k < angles.cols(); ++k) {
      const double u = x(r, 2 * k), v = x(r, 2 * k + 1);
      out(r, 2 * k) = u * cs(r, k) - v * sn(r, k);
      out(r, 2 * k + 1) = u * sn(r, k) + v * cs(r, k);
    }
  }
  return g.push(std::move(out), {ia}, [ia, cs, sn](Graph& g, int self) {
    const Mat& go = g.grad(self);
    Mat& gi = g.grad(ia);
    for (Eigen::Index r = 0; r < go.rows(); ++r) {
      for (Eigen::Index k = 0; k < cs.cols(); ++k) {
        const double gu = go(r, 2 * k), gv = go(r, 2 * k + 1);
        gi(r, 2 * k) += gu * cs(r, k) + gv * sn(r, k);
        gi(r, 2 * k + 1) += -gu * sn(r, k) + gv * cs(r, k);
      }
    }
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  const int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return g.push(std::move(out), {ia}, [ia](Graph& g, int self) {
    g.grad(ia).array() += g.grad(self)(0, 0);
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

}  // namespace tfcodit::ag
