#pragma once

// Reverse-mode automatic differentiation over row-major double matrices.
//
// A Graph records every intermediate value of one forward pass together with
// a closure that propagates the output gradient to its inputs. Parameters live
// outside the graph in a ParamStore; backward() accumulates into their `grad`.

#include "tfcodit/series.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace tfcodit::ag {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;
};

/// Named parameters in insertion order. Addresses are stable.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Mat init, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> index_;
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using BackFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  Var param(Parameter& p);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs all closures in reverse.
  void backward(Var root);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  /// Gradient buffer for node `id`, zero-allocated on first use.
  Mat& grad(int id);
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }

  Var push(Mat value, const std::vector<int>& inputs, BackFn back);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackFn back;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

// Linear algebra.
Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

// Elementwise and broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a (n x m) + b (1 x m) broadcast over rows.
Var add_row(Var a, Var b);
/// a (n x m) * b (1 x m) broadcast over rows.
Var mul_row(Var a, Var b);

// Shape manipulation.
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
/// Row-major reinterpretation; rows*cols must equal the input size.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Each row repeated `times` consecutive times.
Var repeat_rows(Var a, int times);
/// Rows of `table` selected by `ids`.
Var gather_rows(Var table, const std::vector<int>& ids);

// Nonlinearities.
Var gelu(Var a);
Var silu(Var a);
Var exp(Var a);
Var square(Var a);
Var abs(Var a);

// Normalization and attention primitives.
/// Per-row standardization without affine parameters.
Var layer_norm(Var a, double eps = 1e-5);
/// Row softmax of (a + mask); mask may be nullptr. Masked entries are -inf.
Var softmax_rows(Var a, const Mat* mask = nullptr);
/// Rotates consecutive column pairs (2k, 2k+1) of each row by angles(row, k).
Var rotate_pairs(Var a, const Mat& angles);

// Reductions to 1x1.
Var sum(Var a);
Var mean(Var a);

}  // namespace tfcodit::ag
