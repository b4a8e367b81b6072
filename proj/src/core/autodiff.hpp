#pragma once

// Dense reverse-mode automatic differentiation on double-precision arrays.
// A Tape records primitive operations in creation order (already a
// topological order); backward() walks it once in reverse. Tensors are
// rank 0 (scalar), 1 (vector) or 2 (row-major matrix).

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace s2align::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Cheap handle to a tape node. Valid only while its tape is alive.
class Var {
 public:
  Var() = default;
  bool defined() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Shape& shape() const;
  const std::vector<double>& value() const;
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Shape shape, std::vector<double> value, bool requires_grad);
  Var constant(Shape shape, std::vector<double> value) {
    return leaf(std::move(shape), std::move(value), false);
  }
  Var constant_scalar(double v) { return constant({}, {v}); }
  Var constant_vector(std::vector<double> v) {
    Shape s{v.size()};
    return constant(std::move(s), std::move(v));
  }

  // Reverse pass from a scalar loss. Running it a second time on the same
  // tape is an error: closures assume fresh gradient buffers.
  void backward(const Var& loss);

  // Accumulated gradient of a node; zeros if the loss never touched it.
  std::vector<double> grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;
  friend struct OpBuilder;

  struct Node {
    Shape shape;
    std::vector<double> value;
    bool needs_grad = false;
    // Accumulates into parent gradients; null for leaves/constants.
    std::function<void(Tape&, const std::vector<double>& grad_out)> backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool backward_run_ = false;

  Var make_node(Shape shape, std::vector<double> value, bool needs_grad,
                std::function<void(Tape&, const std::vector<double>&)> bw);
  std::vector<double>& grad_buffer(int id);
  const Node& node(int id) const { return nodes_[id]; }

  // Free-function primitives need node access.
  friend Var add(const Var&, const Var&);
  friend Var add_scalar(const Var&, double);
  friend Var sub(const Var&, const Var&);
  friend Var mul(const Var&, const Var&);
  friend Var smul(const Var&, double);
  friend Var neg(const Var&);
  friend Var scale(const Var&, const Var&);
  friend Var matmul(const Var&, const Var&);
  friend Var matmul_nt(const Var&, const Var&);
  friend Var vecmat(const Var&, const Var&);
  friend Var add_rowvec(const Var&, const Var&);
  friend Var neighbor_mean(const std::vector<std::vector<int>>&, const Var&);
  friend Var relu(const Var&);
  friend Var tanh(const Var&);
  friend Var exp(const Var&);
  friend Var log_guarded(const Var&, double);
  friend Var mean(const Var&);
  friend Var sum(const Var&);
  friend Var mean_rows(const Var&);
  friend Var l2_normalize(const Var&);
  friend Var cosine_similarity(const Var&, const Var&);
  friend Var dot(const Var&, const Var&);
  friend Var logsumexp(const Var&);
  friend Var clip(const Var&, double, double);
  friend Var detach(const Var&);
  friend Var stack_rows(const std::vector<Var>&);
  friend Var row(const Var&, std::size_t);
  friend Var col(const Var&, std::size_t);
  friend Var index(const Var&, std::size_t);
};

// Elementwise and reduction primitives. All values double precision.
Var add(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var smul(const Var& a, double c);
Var neg(const Var& a);
// Broadcast multiply of a tensor by a 0-dim Var.
Var scale(const Var& tensor, const Var& scalar);
Var matmul(const Var& a, const Var& b);     // (m,k)x(k,n) -> (m,n)
Var matmul_nt(const Var& a, const Var& b);  // (m,k)x(n,k) -> (m,n), B used transposed
Var vecmat(const Var& x, const Var& w);     // (k)x(k,n) -> (n)
Var add_rowvec(const Var& m, const Var& b);
// Mean over the closed neighborhood {i} u adj[i] of each row.
Var neighbor_mean(const std::vector<std::vector<int>>& adj, const Var& h);
Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log_guarded(const Var& a, double eps);
Var mean(const Var& a);
Var sum(const Var& a);
Var mean_rows(const Var& m);  // (n,d) -> (d), mean over rows
// Unit-norm projection. Inputs with norm below 1e-12 pass through unchanged
// (gradient identity) so degenerate zero vectors stay representable.
Var l2_normalize(const Var& a);
Var cosine_similarity(const Var& a, const Var& b);
Var dot(const Var& a, const Var& b);
Var logsumexp(const Var& a);
// Subgradient convention: identity on the closed interval [lo, hi].
Var clip(const Var& a, double lo, double hi);
Var detach(const Var& a);
Var stack_rows(const std::vector<Var>& rows);
Var row(const Var& m, std::size_t i);
Var col(const Var& m, std::size_t j);
Var index(const Var& v, std::size_t i);

// ---------------------------------------------------------------------------
// Trainable parameter registry. Iteration order is sorted by name.

struct Array {
  Shape shape;
  std::vector<double> data;
  std::size_t size() const { return data.size(); }
};

class Params {
 public:
  void add(const std::string& name, Shape shape, std::vector<double> data);
  bool has(const std::string& name) const;
  Array& at(const std::string& name);
  const Array& at(const std::string& name) const;
  const std::map<std::string, Array>& entries() const { return entries_; }
  std::map<std::string, Array>& entries() { return entries_; }
  std::size_t total_size() const;

 private:
  std::map<std::string, Array> entries_;
};

// Per-tape view of a Params registry.
class BoundParams {
 public:
  BoundParams(Tape& tape, const Params& params, bool requires_grad = true);
  const Var& operator[](const std::string& name) const;
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  std::map<std::string, Var> vars_;
};

using LossFn = std::function<Var(Tape&, const BoundParams&)>;

struct GradResult {
  double value = 0.0;
  std::map<std::string, std::vector<double>> grads;
};

GradResult value_and_grad(const Params& params, const LossFn& loss_fn);
double loss_value(const Params& params, const LossFn& loss_fn);

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradReport {
  bool pass = false;
  double max_rel_err = 0.0;
  double tol = 0.0;
  std::size_t coords_checked = 0;
  std::vector<GradCheckEntry> worst;  // up to 5, sorted by rel_err desc
};

// Central-difference check of reverse-mode gradients. Checks every
// coordinate of tensors with <= max_coords entries, otherwise a seeded
// random subset of max_coords per tensor.
GradReport check_gradients(const Params& params, const LossFn& loss_fn,
                           double eps, double tol, std::uint64_t seed,
                           std::size_t max_coords = 64);

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay.

struct AdamWConfig {
  double lr = 1e-5;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamWState {
 public:
  void ensure(const Params& params);
  std::int64_t step_count = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

void adamw_step(Params& params,
                const std::map<std::string, std::vector<double>>& grads,
                const AdamWConfig& cfg, AdamWState& state);

}  // namespace s2align::ad
