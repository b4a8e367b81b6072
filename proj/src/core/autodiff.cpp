#include "core/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace s2align::ad {

namespace {

constexpr double kNormFloor = 1e-12;

void check_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    raise(ErrorCode::shape, std::string(op) + ": shape mismatch " +
                                shape_str(a) + " vs " + shape_str(b));
  }
}

void check_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    raise(ErrorCode::shape, std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " +
                                shape_str(s));
  }
}

void check_same_tape(const char* op, const Var& a, const Var& b) {
  if (a.tape() != b.tape()) {
    raise(ErrorCode::internal, std::string(op) + ": operands on different tapes");
  }
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

const Shape& Var::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Var::value() const { return tape_->node(id_).value; }

double Var::scalar() const {
  const auto& n = tape_->node(id_);
  if (!n.shape.empty()) {
    raise(ErrorCode::shape, "scalar(): tensor has shape " + shape_str(n.shape));
  }
  return n.value[0];
}

Var Tape::make_node(Shape shape, std::vector<double> value, bool needs_grad,
                    std::function<void(Tape&, const std::vector<double>&)> bw) {
  if (numel(shape) != value.size()) {
    raise(ErrorCode::shape, "node value size " + std::to_string(value.size()) +
                                " does not match shape " + shape_str(shape));
  }
  Node node;
  node.shape = std::move(shape);
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backward = needs_grad ? std::move(bw) : nullptr;
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::leaf(Shape shape, std::vector<double> value, bool requires_grad) {
  return make_node(std::move(shape), std::move(value), requires_grad, nullptr);
}

std::vector<double>& Tape::grad_buffer(int id) {
  if (grads_[id].empty()) grads_[id].assign(numel(nodes_[id].shape), 0.0);
  return grads_[id];
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) {
    raise(ErrorCode::internal, "backward: loss from another tape");
  }
  if (!loss.shape().empty()) {
    raise(ErrorCode::non_scalar_loss,
          "backward: loss has shape " + shape_str(loss.shape()));
  }
  if (backward_run_) {
    raise(ErrorCode::internal,
          "backward: tape already differentiated; record a fresh tape");
  }
  backward_run_ = true;
  grad_buffer(loss.id())[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || !n.backward) continue;
    if (grads_[id].empty()) continue;  // never reached from the loss
    n.backward(*this, grads_[id]);
  }
}

std::vector<double> Tape::grad(const Var& v) const {
  if (v.tape() != this) raise(ErrorCode::internal, "grad: foreign var");
  if (!grads_[v.id()].empty()) return grads_[v.id()];
  return std::vector<double>(numel(nodes_[v.id()].shape), 0.0);
}

// ---------------------------------------------------------------------------
// Primitives

Var add(const Var& a, const Var& b) {
  check_same_tape("add", a, b);
  check_same_shape("add", a.shape(), b.shape());
  Tape& t = *a.tape();
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, ib](Tape& tp, const std::vector<double>& g) {
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                       }
                     });
}

Var add_scalar(const Var& a, double c) {
  Tape& t = *a.tape();
  std::vector<double> out = a.value();
  for (auto& v : out) v += c;
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape("sub", a, b);
  check_same_shape("sub", a.shape(), b.shape());
  Tape& t = *a.tape();
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, ib](Tape& tp, const std::vector<double>& g) {
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                       }
                     });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape("mul", a, b);
  check_same_shape("mul", a.shape(), b.shape());
  Tape& t = *a.tape();
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, ib, av, bv](Tape& tp, const std::vector<double>& g) {
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += g[i] * bv[i];
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gb[i] += g[i] * av[i];
                       }
                     });
}

Var smul(const Var& a, double c) {
  Tape& t = *a.tape();
  std::vector<double> out = a.value();
  for (auto& v : out) v *= c;
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, c](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] += c * g[i];
                     });
}

Var neg(const Var& a) { return smul(a, -1.0); }

Var scale(const Var& tensor, const Var& scalar) {
  check_same_tape("scale", tensor, scalar);
  check_rank("scale: scalar operand", scalar.shape(), 0);
  Tape& t = *tensor.tape();
  const auto tv = tensor.value();
  const double s = scalar.value()[0];
  std::vector<double> out(tv.size());
  for (std::size_t i = 0; i < tv.size(); ++i) out[i] = s * tv[i];
  const bool ng =
      t.node(tensor.id()).needs_grad || t.node(scalar.id()).needs_grad;
  const int it = tensor.id(), is = scalar.id();
  return t.make_node(tensor.shape(), std::move(out), ng,
                     [it, is, tv, s](Tape& tp, const std::vector<double>& g) {
                       if (tp.node(it).needs_grad) {
                         auto& gt = tp.grad_buffer(it);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gt[i] += s * g[i];
                       }
                       if (tp.node(is).needs_grad) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < g.size(); ++i)
                           acc += g[i] * tv[i];
                         tp.grad_buffer(is)[0] += acc;
                       }
                     });
}

Var matmul(const Var& a, const Var& b) {
  check_same_tape("matmul", a, b);
  check_rank("matmul lhs", a.shape(), 2);
  check_rank("matmul rhs", b.shape(), 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    raise(ErrorCode::shape, "matmul: inner dims differ " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  Tape& t = *a.tape();
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node({m, n}, std::move(out), ng,
                     [ia, ib, av, bv, m, k, n](Tape& tp,
                                               const std::vector<double>& g) {
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);  // G * B^T
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             const double* grow = &g[i * n];
                             const double* brow = &bv[p * n];
                             for (std::size_t j = 0; j < n; ++j)
                               acc += grow[j] * brow[j];
                             ga[i * k + p] += acc;
                           }
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);  // A^T * G
                         for (std::size_t p = 0; p < k; ++p)
                           for (std::size_t i = 0; i < m; ++i) {
                             const double aip = av[i * k + p];
                             if (aip == 0.0) continue;
                             const double* grow = &g[i * n];
                             double* gbrow = &gb[p * n];
                             for (std::size_t j = 0; j < n; ++j)
                               gbrow[j] += aip * grow[j];
                           }
                       }
                     });
}

Var matmul_nt(const Var& a, const Var& b) {
  check_same_tape("matmul_nt", a, b);
  check_rank("matmul_nt lhs", a.shape(), 2);
  check_rank("matmul_nt rhs", b.shape(), 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[0], k2 = b.shape()[1];
  if (k != k2) {
    raise(ErrorCode::shape, "matmul_nt: inner dims differ " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Tape& t = *a.tape();
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      const double* arow = &av[i * k];
      const double* brow = &bv[j * k];
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] = acc;
    }
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node({m, n}, std::move(out), ng,
                     [ia, ib, av, bv, m, k, n](Tape& tp,
                                               const std::vector<double>& g) {
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);  // G * B
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                             const double gij = g[i * n + j];
                             if (gij == 0.0) continue;
                             const double* brow = &bv[j * k];
                             double* garow = &ga[i * k];
                             for (std::size_t p = 0; p < k; ++p)
                               garow[p] += gij * brow[p];
                           }
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);  // G^T * A
                         for (std::size_t j = 0; j < n; ++j)
                           for (std::size_t i = 0; i < m; ++i) {
                             const double gij = g[i * n + j];
                             if (gij == 0.0) continue;
                             const double* arow = &av[i * k];
                             double* gbrow = &gb[j * k];
                             for (std::size_t p = 0; p < k; ++p)
                               gbrow[p] += gij * arow[p];
                           }
                       }
                     });
}

Var vecmat(const Var& x, const Var& w) {
  check_same_tape("vecmat", x, w);
  check_rank("vecmat lhs", x.shape(), 1);
  check_rank("vecmat rhs", w.shape(), 2);
  const std::size_t k = x.shape()[0];
  if (w.shape()[0] != k) {
    raise(ErrorCode::shape, "vecmat: inner dims differ " + shape_str(x.shape()) +
                                " x " + shape_str(w.shape()));
  }
  const std::size_t n = w.shape()[1];
  Tape& t = *x.tape();
  const auto xv = x.value();
  const auto wv = w.value();
  std::vector<double> out(n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double xp = xv[p];
    if (xp == 0.0) continue;
    const double* wrow = &wv[p * n];
    for (std::size_t j = 0; j < n; ++j) out[j] += xp * wrow[j];
  }
  const bool ng = t.node(x.id()).needs_grad || t.node(w.id()).needs_grad;
  const int ix = x.id(), iw = w.id();
  return t.make_node({n}, std::move(out), ng,
                     [ix, iw, xv, wv, k, n](Tape& tp,
                                            const std::vector<double>& g) {
                       if (tp.node(ix).needs_grad) {
                         auto& gx = tp.grad_buffer(ix);
                         for (std::size_t p = 0; p < k; ++p) {
                           double acc = 0.0;
                           const double* wrow = &wv[p * n];
                           for (std::size_t j = 0; j < n; ++j)
                             acc += wrow[j] * g[j];
                           gx[p] += acc;
                         }
                       }
                       if (tp.node(iw).needs_grad) {
                         auto& gw = tp.grad_buffer(iw);
                         for (std::size_t p = 0; p < k; ++p) {
                           const double xp = xv[p];
                           if (xp == 0.0) continue;
                           double* gwrow = &gw[p * n];
                           for (std::size_t j = 0; j < n; ++j)
                             gwrow[j] += xp * g[j];
                         }
                       }
                     });
}

Var add_rowvec(const Var& m, const Var& b) {
  check_same_tape("add_rowvec", m, b);
  check_rank("add_rowvec lhs", m.shape(), 2);
  check_rank("add_rowvec rhs", b.shape(), 1);
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (b.shape()[0] != cols) {
    raise(ErrorCode::shape, "add_rowvec: " + shape_str(m.shape()) + " + " +
                                shape_str(b.shape()));
  }
  Tape& t = *m.tape();
  const auto& mv = m.value();
  const auto& bv = b.value();
  std::vector<double> out(mv.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = mv[i * cols + j] + bv[j];
  const bool ng = t.node(m.id()).needs_grad || t.node(b.id()).needs_grad;
  const int im = m.id(), ib = b.id();
  return t.make_node({rows, cols}, std::move(out), ng,
                     [im, ib, rows, cols](Tape& tp,
                                          const std::vector<double>& g) {
                       if (tp.node(im).needs_grad) {
                         auto& gm = tp.grad_buffer(im);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gm[i] += g[i];
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < rows; ++i)
                           for (std::size_t j = 0; j < cols; ++j)
                             gb[j] += g[i * cols + j];
                       }
                     });
}

Var neighbor_mean(const std::vector<std::vector<int>>& adj, const Var& h) {
  check_rank("neighbor_mean", h.shape(), 2);
  const std::size_t n = h.shape()[0], d = h.shape()[1];
  if (adj.size() != n) {
    raise(ErrorCode::shape, "neighbor_mean: adjacency size " +
                                std::to_string(adj.size()) + " vs rows " +
                                std::to_string(n));
  }
  Tape& t = *h.tape();
  const auto& hv = h.value();
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out[i * d];
    const double* self = &hv[i * d];
    for (std::size_t c = 0; c < d; ++c) orow[c] = self[c];
    for (int j : adj[i]) {
      const double* nrow = &hv[static_cast<std::size_t>(j) * d];
      for (std::size_t c = 0; c < d; ++c) orow[c] += nrow[c];
    }
    const double inv = 1.0 / (1.0 + static_cast<double>(adj[i].size()));
    for (std::size_t c = 0; c < d; ++c) orow[c] *= inv;
  }
  const bool ng = t.node(h.id()).needs_grad;
  const int ih = h.id();
  // The closure keeps its own copy of the adjacency.
  auto adj_copy = adj;
  return t.make_node({n, d}, std::move(out), ng,
                     [ih, adj_copy, n, d](Tape& tp,
                                          const std::vector<double>& g) {
                       auto& gh = tp.grad_buffer(ih);
                       for (std::size_t i = 0; i < n; ++i) {
                         const double inv =
                             1.0 / (1.0 + static_cast<double>(adj_copy[i].size()));
                         const double* grow = &g[i * d];
                         double* self = &gh[i * d];
                         for (std::size_t c = 0; c < d; ++c)
                           self[c] += inv * grow[c];
                         for (int j : adj_copy[i]) {
                           double* nrow = &gh[static_cast<std::size_t>(j) * d];
                           for (std::size_t c = 0; c < d; ++c)
                             nrow[c] += inv * grow[c];
                         }
                       }
                     });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, av](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (av[i] > 0.0) ga[i] += g[i];
                     });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  auto yv = out;
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, yv](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] += g[i] * (1.0 - yv[i] * yv[i]);
                     });
}

Var exp(const Var& a) {
  Tape& t = *a.tape();
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::exp(av[i]);
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  auto yv = out;
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, yv](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] += g[i] * yv[i];
                     });
}

Var log_guarded(const Var& a, double eps) {
  Tape& t = *a.tape();
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::log(av[i] + eps);
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, av, eps](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] += g[i] / (av[i] + eps);
                     });
}

Var mean(const Var& a) {
  Tape& t = *a.tape();
  const auto& av = a.value();
  double s = 0.0;
  for (double v : av) s += v;
  const double n = static_cast<double>(av.size());
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  const std::size_t count = av.size();
  return t.make_node({}, {s / n}, ng,
                     [ia, count](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       const double gi = g[0] / static_cast<double>(count);
                       for (std::size_t i = 0; i < count; ++i) ga[i] += gi;
                     });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  const auto& av = a.value();
  double s = 0.0;
  for (double v : av) s += v;
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  const std::size_t count = av.size();
  return t.make_node({}, {s}, ng,
                     [ia, count](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < count; ++i) ga[i] += g[0];
                     });
}

Var mean_rows(const Var& m) {
  check_rank("mean_rows", m.shape(), 2);
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  Tape& t = *m.tape();
  const auto& mv = m.value();
  std::vector<double> out(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j] += mv[i * cols + j];
  for (auto& v : out) v /= static_cast<double>(rows);
  const bool ng = t.node(m.id()).needs_grad;
  const int im = m.id();
  return t.make_node({cols}, std::move(out), ng,
                     [im, rows, cols](Tape& tp, const std::vector<double>& g) {
                       auto& gm = tp.grad_buffer(im);
                       const double inv = 1.0 / static_cast<double>(rows);
                       for (std::size_t i = 0; i < rows; ++i)
                         for (std::size_t j = 0; j < cols; ++j)
                           gm[i * cols + j] += inv * g[j];
                     });
}

Var l2_normalize(const Var& a) {
  check_rank("l2_normalize", a.shape(), 1);
  Tape& t = *a.tape();
  const auto av = a.value();
  double nrm = 0.0;
  for (double v : av) nrm += v * v;
  nrm = std::sqrt(nrm);
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  if (nrm < kNormFloor) {
    // Degenerate input: pass through so zero vectors stay zero.
    std::vector<double> out = av;
    return t.make_node(a.shape(), std::move(out), ng,
                       [ia](Tape& tp, const std::vector<double>& g) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += g[i];
                       });
  }
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / nrm;
  auto yv = out;
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, yv, nrm](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       double yg = 0.0;
                       for (std::size_t i = 0; i < g.size(); ++i)
                         yg += yv[i] * g[i];
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga[i] += (g[i] - yv[i] * yg) / nrm;
                     });
}

Var cosine_similarity(const Var& a, const Var& b) {
  check_same_tape("cosine_similarity", a, b);
  check_same_shape("cosine_similarity", a.shape(), b.shape());
  check_rank("cosine_similarity", a.shape(), 1);
  Tape& t = *a.tape();
  const auto av = a.value();
  const auto bv = b.value();
  double na = 0.0, nb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    na += av[i] * av[i];
    nb += bv[i] * bv[i];
    ab += av[i] * bv[i];
  }
  na = std::max(std::sqrt(na), kNormFloor);
  nb = std::max(std::sqrt(nb), kNormFloor);
  const double c = ab / (na * nb);
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node({}, {c}, ng,
                     [ia, ib, av, bv, na, nb, c](Tape& tp,
                                                 const std::vector<double>& g) {
                       const double g0 = g[0];
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < av.size(); ++i)
                           ga[i] += g0 * (bv[i] / (na * nb) -
                                          c * av[i] / (na * na));
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < bv.size(); ++i)
                           gb[i] += g0 * (av[i] / (na * nb) -
                                          c * bv[i] / (nb * nb));
                       }
                     });
}

Var dot(const Var& a, const Var& b) {
  check_same_tape("dot", a, b);
  check_same_shape("dot", a.shape(), b.shape());
  check_rank("dot", a.shape(), 1);
  Tape& t = *a.tape();
  const auto av = a.value();
  const auto bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const bool ng = t.node(a.id()).needs_grad || t.node(b.id()).needs_grad;
  const int ia = a.id(), ib = b.id();
  return t.make_node({}, {s}, ng,
                     [ia, ib, av, bv](Tape& tp, const std::vector<double>& g) {
                       const double g0 = g[0];
                       if (tp.node(ia).needs_grad) {
                         auto& ga = tp.grad_buffer(ia);
                         for (std::size_t i = 0; i < bv.size(); ++i)
                           ga[i] += g0 * bv[i];
                       }
                       if (tp.node(ib).needs_grad) {
                         auto& gb = tp.grad_buffer(ib);
                         for (std::size_t i = 0; i < av.size(); ++i)
                           gb[i] += g0 * av[i];
                       }
                     });
}

Var logsumexp(const Var& a) {
  Tape& t = *a.tape();
  const auto& av = a.value();
  if (av.empty()) raise(ErrorCode::shape, "logsumexp: empty input");
  const double m = *std::max_element(av.begin(), av.end());
  double s = 0.0;
  for (double v : av) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> softmax(av.size());
  for (std::size_t i = 0; i < av.size(); ++i)
    softmax[i] = std::exp(av[i] - lse);
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  return t.make_node({}, {lse}, ng,
                     [ia, softmax](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < softmax.size(); ++i)
                         ga[i] += g[0] * softmax[i];
                     });
}

Var clip(const Var& a, double lo, double hi) {
  if (!(lo <= hi)) raise(ErrorCode::invalid_argument, "clip: lo > hi");
  Tape& t = *a.tape();
  const auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i)
    out[i] = std::min(std::max(av[i], lo), hi);
  const bool ng = t.node(a.id()).needs_grad;
  const int ia = a.id();
  return t.make_node(a.shape(), std::move(out), ng,
                     [ia, av, lo, hi](Tape& tp, const std::vector<double>& g) {
                       auto& ga = tp.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (av[i] >= lo && av[i] <= hi) ga[i] += g[i];
                     });
}

Var detach(const Var& a) {
  Tape& t = *a.tape();
  return t.constant(a.shape(), a.value());
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) raise(ErrorCode::shape, "stack_rows: no rows");
  Tape& t = *rows[0].tape();
  const std::size_t d = rows[0].shape().empty() ? 1 : rows[0].shape()[0];
  std::vector<double> out;
  out.reserve(rows.size() * d);
  bool ng = false;
  std::vector<int> ids(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_same_tape("stack_rows", rows[0], rows[i]);
    check_rank("stack_rows", rows[i].shape(), 1);
    if (rows[i].shape()[0] != d) {
      raise(ErrorCode::shape, "stack_rows: row " + std::to_string(i) +
                                  " has shape " + shape_str(rows[i].shape()));
    }
    const auto& rv = rows[i].value();
    out.insert(out.end(), rv.begin(), rv.end());
    ng = ng || t.node(rows[i].id()).needs_grad;
    ids[i] = rows[i].id();
  }
  return t.make_node({rows.size(), d}, std::move(out), ng,
                     [ids, d](Tape& tp, const std::vector<double>& g) {
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (!tp.node(ids[i]).needs_grad) continue;
                         auto& gr = tp.grad_buffer(ids[i]);
                         for (std::size_t j = 0; j < d; ++j)
                           gr[j] += g[i * d + j];
                       }
                     });
}

Var row(const Var& m, std::size_t i) {
  check_rank("row", m.shape(), 2);
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (i >= rows) raise(ErrorCode::shape, "row: index out of range");
  Tape& t = *m.tape();
  const auto& mv = m.value();
  std::vector<double> out(mv.begin() + i * cols, mv.begin() + (i + 1) * cols);
  const bool ng = t.node(m.id()).needs_grad;
  const int im = m.id();
  return t.make_node({cols}, std::move(out), ng,
                     [im, i, cols](Tape& tp, const std::vector<double>& g) {
                       auto& gm = tp.grad_buffer(im);
                       for (std::size_t j = 0; j < cols; ++j)
                         gm[i * cols + j] += g[j];
                     });
}

Var col(const Var& m, std::size_t j) {
  check_rank("col", m.shape(), 2);
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (j >= cols) raise(ErrorCode::shape, "col: index out of range");
  Tape& t = *m.tape();
  const auto& mv = m.value();
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = mv[i * cols + j];
  const bool ng = t.node(m.id()).needs_grad;
  const int im = m.id();
  return t.make_node({rows}, std::move(out), ng,
                     [im, j, cols](Tape& tp, const std::vector<double>& g) {
                       auto& gm = tp.grad_buffer(im);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gm[i * cols + j] += g[i];
                     });
}

Var index(const Var& v, std::size_t i) {
  check_rank("index", v.shape(), 1);
  if (i >= v.shape()[0]) raise(ErrorCode::shape, "index: out of range");
  Tape& t = *v.tape();
  const bool ng = t.node(v.id()).needs_grad;
  const int iv = v.id();
  return t.make_node({}, {v.value()[i]}, ng,
                     [iv, i](Tape& tp, const std::vector<double>& g) {
                       tp.grad_buffer(iv)[i] += g[0];
                     });
}

// ---------------------------------------------------------------------------
// Params

void Params::add(const std::string& name, Shape shape,
                 std::vector<double> data) {
  if (entries_.count(name)) {
    raise(ErrorCode::invalid_argument, "Params: duplicate name " + name);
  }
  if (numel(shape) != data.size()) {
    raise(ErrorCode::shape, "Params: " + name + " data size mismatch");
  }
  entries_.emplace(name, Array{std::move(shape), std::move(data)});
}

bool Params::has(const std::string& name) const {
  return entries_.count(name) != 0;
}

Array& Params::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    raise(ErrorCode::invalid_argument, "Params: unknown name " + name);
  }
  return it->second;
}

const Array& Params::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    raise(ErrorCode::invalid_argument, "Params: unknown name " + name);
  }
  return it->second;
}

std::size_t Params::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, arr] : entries_) n += arr.size();
  return n;
}

BoundParams::BoundParams(Tape& tape, const Params& params, bool requires_grad) {
  for (const auto& [name, arr] : params.entries()) {
    vars_.emplace(name, tape.leaf(arr.shape, arr.data, requires_grad));
  }
}

const Var& BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    raise(ErrorCode::invalid_argument, "BoundParams: unknown name " + name);
  }
  return it->second;
}

GradResult value_and_grad(const Params& params, const LossFn& loss_fn) {
  Tape tape;
  BoundParams bound(tape, params, /*requires_grad=*/true);
  Var loss = loss_fn(tape, bound);
  if (!loss.shape().empty()) {
    raise(ErrorCode::non_scalar_loss,
          "value_and_grad: loss has shape " + shape_str(loss.shape()));
  }
  tape.backward(loss);
  GradResult result;
  result.value = loss.scalar();
  for (const auto& [name, var] : bound.vars()) {
    result.grads[name] = tape.grad(var);
  }
  return result;
}

double loss_value(const Params& params, const LossFn& loss_fn) {
  Tape tape;
  BoundParams bound(tape, params, /*requires_grad=*/false);
  Var loss = loss_fn(tape, bound);
  if (!loss.shape().empty()) {
    raise(ErrorCode::non_scalar_loss,
          "loss_value: loss has shape " + shape_str(loss.shape()));
  }
  return loss.scalar();
}

GradReport check_gradients(const Params& params, const LossFn& loss_fn,
                           double eps, double tol, std::uint64_t seed,
                           std::size_t max_coords) {
  if (!(eps > 0.0)) raise(ErrorCode::invalid_argument, "check_gradients: eps <= 0");
  GradResult analytic = value_and_grad(params, loss_fn);
  GradReport report;
  report.tol = tol;
  for (const auto& [name, arr] : params.entries()) {
    std::vector<std::size_t> coords;
    if (arr.size() <= max_coords) {
      coords.resize(arr.size());
      for (std::size_t i = 0; i < arr.size(); ++i) coords[i] = i;
    } else {
      Rng rng(derive_seed(seed, "gradcheck", fnv1a64(name)));
      coords = rng.sample_without_replacement(arr.size(), max_coords);
    }
    for (std::size_t idx : coords) {
      Params p = params;
      double& slot = p.at(name).data[idx];
      const double base = slot;
      slot = base + eps;
      const double fp = loss_value(p, loss_fn);
      slot = base - eps;
      const double fm = loss_value(p, loss_fn);
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.grads.at(name)[idx];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) report.max_rel_err = rel;
      if (report.worst.size() < 5 || rel > report.worst.back().rel_err) {
        report.worst.push_back({name, idx, a, numeric, rel});
        std::sort(report.worst.begin(), report.worst.end(),
                  [](const GradCheckEntry& x, const GradCheckEntry& y) {
                    return x.rel_err > y.rel_err;
                  });
        if (report.worst.size() > 5) report.worst.resize(5);
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

void AdamWState::ensure(const Params& params) {
  for (const auto& [name, arr] : params.entries()) {
    if (!m.count(name)) {
      m[name].assign(arr.size(), 0.0);
      v[name].assign(arr.size(), 0.0);
    }
  }
}

void adamw_step(Params& params,
                const std::map<std::string, std::vector<double>>& grads,
                const AdamWConfig& cfg, AdamWState& state) {
  state.ensure(params);
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (auto& [name, arr] : params.entries()) {
    auto git = grads.find(name);
    const std::vector<double>* g = git != grads.end() ? &git->second : nullptr;
    auto& m = state.m[name];
    auto& v = state.v[name];
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      arr.data[i] -= cfg.lr * cfg.weight_decay * arr.data[i];
      arr.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace s2align::ad
