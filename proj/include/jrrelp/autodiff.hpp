#pragma once

// Reverse-mode autodiff over dense Eigen matrices.
//
// A Tape owns the computation graph of one forward pass; Var is a cheap
// handle into it. Every op allocates one node holding the forward value and
// a closure that scatters the node gradient to its parents. Gradients of
// Parameter leaves accumulate into Parameter::grad, which persists across
// tapes; everything else dies with the tape.
//
// Ops never mix columns across the batch dimension except where the math
// requires it (pooling, per-sentence aggregation), which keeps per-sentence
// masking exact: a multiplicative 0 cuts a path bitwise, so frozen/padded
// inputs contribute nothing rather than something small.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "jrrelp/errors.hpp"
#include "jrrelp/rng.hpp"

namespace jrrelp::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// A named learnable tensor. Stored exactly once; both task heads reference
// the same object, which is what makes the parameter sharing real.
template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  int frozen_col = -1;  // column pinned at zero; receives no gradient, no update

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Mat<S>::Zero(rows, cols)),
        grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }

  void init_uniform(Rng& rng, double scale) {
    for (Eigen::Index j = 0; j < value.cols(); ++j)
      for (Eigen::Index i = 0; i < value.rows(); ++i)
        value(i, j) = static_cast<S>(rng.uniform(-scale, scale));
    if (frozen_col >= 0) value.col(frozen_col).setZero();
  }
};

template <typename S>
class Tape;

template <typename S>
struct Node {
  Mat<S> value;
  Mat<S> grad;  // lazily allocated on first accumulation
  bool requires_grad = false;
  std::function<void(Node<S>&)> backward;

  bool has_grad() const { return grad.size() != 0; }

  template <typename Expr>
  void accum(const Expr& g) {
    if (!requires_grad) return;
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
};

template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, Node<S>* node) : tape_(tape), node_(node) {}

  const Mat<S>& value() const { return node_->value; }
  const Mat<S>& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool valid() const { return node_ != nullptr; }

  Tape<S>* tape() const { return tape_; }
  Node<S>* node() const { return node_; }

 private:
  Tape<S>* tape_ = nullptr;
  Node<S>* node_ = nullptr;
};

template <typename S>
class Tape {
 public:
  Var<S> make(Mat<S> value, bool requires_grad,
              std::function<void(Node<S>&)> backward = nullptr) {
    nodes_.push_back(std::make_unique<Node<S>>());
    Node<S>* n = nodes_.back().get();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->backward = std::move(backward);
    return Var<S>(this, n);
  }

  Var<S> constant(Mat<S> value) { return make(std::move(value), false); }

  Var<S> zeros(Eigen::Index r, Eigen::Index c) {
    return make(Mat<S>::Zero(r, c), false);
  }

  // Full view of a parameter. Gradient flows back into param.grad.
  Var<S> leaf(Parameter<S>& p) {
    Parameter<S>* pp = &p;
    return make(p.value, true, [pp](Node<S>& n) {
      pp->grad += n.grad;
      if (pp->frozen_col >= 0) pp->grad.col(pp->frozen_col).setZero();
    });
  }

  // Column-gather view of a parameter: out.col(i) = p.value.col(idx[i]).
  // Backward scatter-adds; the frozen column is skipped.
  Var<S> gather_cols(Parameter<S>& p, std::vector<int> idx) {
    const Eigen::Index r = p.value.rows();
    Mat<S> out(r, static_cast<Eigen::Index>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= p.value.cols())
        throw ValidationError("embedding index out of range: " + std::to_string(idx[i]) +
                              " for " + p.name);
      out.col(static_cast<Eigen::Index>(i)) = p.value.col(idx[i]);
    }
    Parameter<S>* pp = &p;
    return make(std::move(out), true, [pp, idx = std::move(idx)](Node<S>& n) {
      for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] == pp->frozen_col) continue;
        pp->grad.col(idx[i]) += n.grad.col(static_cast<Eigen::Index>(i));
      }
    });
  }

  // Reverse sweep from `loss` (must be 1x1). Node creation order is a valid
  // topological order, so a single reverse pass suffices.
  void backward(Var<S> loss) {
    Node<S>* ln = loss.node();
    if (ln->value.size() != 1)
      throw ValidationError("backward() expects a scalar loss node");
    ln->grad = Mat<S>::Ones(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<S>& n = **it;
      if (n.backward && n.has_grad()) n.backward(n);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node<S>>> nodes_;
};

namespace detail {
template <typename S>
bool any_requires(std::initializer_list<const Var<S>*> vs) {
  for (const Var<S>* v : vs)
    if ((*v).node()->requires_grad) return true;
  return false;
}
template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ValidationError(std::string(op) + ": shape mismatch");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise / linear ops

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::check_same_shape(a, b, "add");
  Node<S>*an = a.node(), *bn = b.node();
  return a.tape()->make(an->value + bn->value, detail::any_requires<S>({&a, &b}),
                        [an, bn](Node<S>& n) {
                          an->accum(n.grad);
                          bn->accum(n.grad);
                        });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::check_same_shape(a, b, "sub");
  Node<S>*an = a.node(), *bn = b.node();
  return a.tape()->make(an->value - bn->value, detail::any_requires<S>({&a, &b}),
                        [an, bn](Node<S>& n) {
                          an->accum(n.grad);
                          bn->accum(-n.grad);
                        });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {  // Hadamard
  detail::check_same_shape(a, b, "mul");
  Node<S>*an = a.node(), *bn = b.node();
  return a.tape()->make(an->value.cwiseProduct(bn->value),
                        detail::any_requires<S>({&a, &b}), [an, bn](Node<S>& n) {
                          an->accum(n.grad.cwiseProduct(bn->value));
                          bn->accum(n.grad.cwiseProduct(an->value));
                        });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Node<S>* an = a.node();
  return a.tape()->make(an->value * c, an->requires_grad,
                        [an, c](Node<S>& n) { an->accum(n.grad * c); });
}

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a.cols() != b.rows()) throw ValidationError("matmul: inner dimension mismatch");
  Node<S>*an = a.node(), *bn = b.node();
  return a.tape()->make(an->value * bn->value, detail::any_requires<S>({&a, &b}),
                        [an, bn](Node<S>& n) {
                          an->accum(n.grad * bn->value.transpose());
                          bn->accum(an->value.transpose() * n.grad);
                        });
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Node<S>* an = a.node();
  return a.tape()->make(an->value.transpose(), an->requires_grad,
                        [an](Node<S>& n) { an->accum(n.grad.transpose()); });
}

// out.col(j) = m.col(j) + v   (v is r x 1)
template <typename S>
Var<S> add_colvec(Var<S> m, Var<S> v) {
  if (v.cols() != 1 || v.rows() != m.rows())
    throw ValidationError("add_colvec: bias must be rows(m) x 1");
  Node<S>*mn = m.node(), *vn = v.node();
  Mat<S> out = mn->value;
  out.colwise() += Vec<S>(vn->value.col(0));
  return m.tape()->make(std::move(out), detail::any_requires<S>({&m, &v}),
                        [mn, vn](Node<S>& n) {
                          mn->accum(n.grad);
                          vn->accum(n.grad.rowwise().sum());
                        });
}

// out(i, j) = m(i, j) * r(0, j), gradient flows into both.
template <typename S>
Var<S> scale_cols(Var<S> m, Var<S> r) {
  if (r.rows() != 1 || r.cols() != m.cols())
    throw ValidationError("scale_cols: weights must be 1 x cols(m)");
  Node<S>*mn = m.node(), *rn = r.node();
  Mat<S> out = mn->value.array().rowwise() *
               Eigen::Array<S, 1, Eigen::Dynamic>(rn->value.row(0).array());
  return m.tape()->make(std::move(out), detail::any_requires<S>({&m, &r}),
                        [mn, rn](Node<S>& n) {
                          mn->accum((n.grad.array().rowwise() *
                                     Eigen::Array<S, 1, Eigen::Dynamic>(
                                         rn->value.row(0).array()))
                                        .matrix());
                          rn->accum(n.grad.cwiseProduct(mn->value).colwise().sum());
                        });
}

// Same as scale_cols but the weights are a constant (no gradient path).
template <typename S>
Var<S> scale_cols_const(Var<S> m, const RowVec<S>& r) {
  if (r.cols() != m.cols()) throw ValidationError("scale_cols_const: width mismatch");
  Node<S>* mn = m.node();
  Mat<S> out = mn->value.array().rowwise() * r.array();
  RowVec<S> rc = r;
  return m.tape()->make(std::move(out), mn->requires_grad,
                        [mn, rc](Node<S>& n) {
                          mn->accum((n.grad.array().rowwise() * rc.array()).matrix());
                        });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows: empty input");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  bool req = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ValidationError("concat_rows: column mismatch");
    rows += p.rows();
    req = req || p.node()->requires_grad;
  }
  Mat<S> out(rows, cols);
  std::vector<Node<S>*> ps;
  ps.reserve(parts.size());
  Eigen::Index r0 = 0;
  for (const auto& p : parts) {
    out.middleRows(r0, p.rows()) = p.value();
    ps.push_back(p.node());
    r0 += p.rows();
  }
  return parts.front().tape()->make(std::move(out), req, [ps](Node<S>& n) {
    Eigen::Index r = 0;
    for (Node<S>* p : ps) {
      p->accum(n.grad.middleRows(r, p->value.rows()));
      r += p->value.rows();
    }
  });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index r0, Eigen::Index nr) {
  if (r0 < 0 || r0 + nr > a.rows()) throw ValidationError("slice_rows: out of range");
  Node<S>* an = a.node();
  return a.tape()->make(Mat<S>(an->value.middleRows(r0, nr)), an->requires_grad,
                        [an, r0, nr](Node<S>& n) {
                          if (!an->requires_grad) return;
                          if (an->grad.size() == 0)
                            an->grad = Mat<S>::Zero(an->value.rows(), an->value.cols());
                          an->grad.middleRows(r0, nr) += n.grad;
                        });
}

template <typename S>
Var<S> row(Var<S> a, Eigen::Index i) {
  return slice_rows(a, i, 1);
}

// ---------------------------------------------------------------------------
// nonlinearities

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Node<S>* an = a.node();
  Mat<S> out = an->value.unaryExpr([](S x) {
    return x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                     : std::exp(x) / (S(1) + std::exp(x));
  });
  return a.tape()->make(out, an->requires_grad, [an, out](Node<S>& n) {
    an->accum(n.grad.cwiseProduct(
        (out.array() * (S(1) - out.array())).matrix()));
  });
}

template <typename S>
Var<S> tanh_act(Var<S> a) {
  Node<S>* an = a.node();
  Mat<S> out = an->value.array().tanh();
  return a.tape()->make(out, an->requires_grad, [an, out](Node<S>& n) {
    an->accum(n.grad.cwiseProduct((S(1) - out.array().square()).matrix()));
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Node<S>* an = a.node();
  Mat<S> out = an->value.cwiseMax(S(0));
  return a.tape()->make(std::move(out), an->requires_grad, [an](Node<S>& n) {
    an->accum(n.grad.cwiseProduct(
        (an->value.array() > S(0)).template cast<S>().matrix()));
  });
}

// Inverted dropout. Identity (no node, no RNG draw) when off, so that a
// rate-0 run is bitwise identical to a dropout-free graph.
template <typename S>
Var<S> dropout(Var<S> a, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  Node<S>* an = a.node();
  Mat<S> mask(a.rows(), a.cols());
  const S keep = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      mask(i, j) = rng.bernoulli(rate) ? S(0) : keep;
  return a.tape()->make(an->value.cwiseProduct(mask), an->requires_grad,
                        [an, mask](Node<S>& n) {
                          an->accum(n.grad.cwiseProduct(mask));
                        });
}

// ---------------------------------------------------------------------------
// softmax / losses

// Softmax down each column over entries with mask(i,j) == 1; masked entries
// get weight exactly 0. Columns with an empty mask are left all-zero.
template <typename S>
Var<S> masked_softmax(Var<S> scores, const Mat<S>& mask) {
  if (mask.rows() != scores.rows() || mask.cols() != scores.cols())
    throw ValidationError("masked_softmax: mask shape mismatch");
  Node<S>* sn = scores.node();
  Mat<S> out = Mat<S>::Zero(scores.rows(), scores.cols());
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (mask(i, j) > S(0)) mx = std::max(mx, sn->value(i, j));
    if (!std::isfinite(static_cast<double>(mx))) continue;
    S z = S(0);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (mask(i, j) > S(0)) {
        out(i, j) = std::exp(sn->value(i, j) - mx);
        z += out(i, j);
      }
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (mask(i, j) > S(0)) out(i, j) /= z;
  }
  Mat<S> mk = mask;
  return scores.tape()->make(out, sn->requires_grad, [sn, out, mk](Node<S>& n) {
    if (!sn->requires_grad) return;
    Mat<S> g = Mat<S>::Zero(out.rows(), out.cols());
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      S dot = S(0);
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        if (mk(i, j) > S(0)) dot += out(i, j) * n.grad(i, j);
      for (Eigen::Index i = 0; i < out.rows(); ++i)
        if (mk(i, j) > S(0)) g(i, j) = out(i, j) * (n.grad(i, j) - dot);
    }
    sn->accum(g);
  });
}

// Per-column softmax cross-entropy: out(0,b) = logsumexp(logits.col(b)) -
// logits(labels[b], b). Returns a 1 x B row of losses.
template <typename S>
Var<S> softmax_xent_rows(Var<S> logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols())
    throw ValidationError("softmax_xent_rows: label count mismatch");
  Node<S>* ln = logits.node();
  const Eigen::Index B = logits.cols();
  Mat<S> probs(logits.rows(), B);
  Mat<S> out(1, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    if (labels[b] < 0 || labels[b] >= logits.rows())
      throw ValidationError("softmax_xent_rows: label out of range");
    const S mx = ln->value.col(b).maxCoeff();
    Vec<S> e = (ln->value.col(b).array() - mx).exp();
    const S z = e.sum();
    probs.col(b) = e / z;
    out(0, b) = std::log(z) + mx - ln->value(labels[b], b);
  }
  return logits.tape()->make(std::move(out), ln->requires_grad,
                             [ln, probs, labels](Node<S>& n) {
                               if (!ln->requires_grad) return;
                               Mat<S> g = probs;
                               for (Eigen::Index b = 0; b < g.cols(); ++b) {
                                 g(labels[b], b) -= S(1);
                                 g.col(b) *= n.grad(0, b);
                               }
                               ln->accum(g);
                             });
}

// Per-column binary cross-entropy from logits against {0,1} targets,
// averaged over rows (candidates): out(0,b) = mean_i softplus(x_ib) - t_ib x_ib.
template <typename S>
Var<S> bce_logits_rowmean(Var<S> logits, const Mat<S>& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw ValidationError("bce_logits_rowmean: target shape mismatch");
  Node<S>* ln = logits.node();
  const Eigen::Index R = logits.rows(), B = logits.cols();
  auto softplus = [](S x) {
    return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  };
  Mat<S> out(1, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    S acc = S(0);
    for (Eigen::Index i = 0; i < R; ++i)
      acc += softplus(ln->value(i, b)) - targets(i, b) * ln->value(i, b);
    out(0, b) = acc / static_cast<S>(R);
  }
  Mat<S> tg = targets;
  return logits.tape()->make(std::move(out), ln->requires_grad,
                             [ln, tg, R](Node<S>& n) {
                               if (!ln->requires_grad) return;
                               Mat<S> sig = ln->value.unaryExpr([](S x) {
                                 return x >= S(0)
                                            ? S(1) / (S(1) + std::exp(-x))
                                            : std::exp(x) / (S(1) + std::exp(x));
                               });
                               Mat<S> g = (sig - tg) / static_cast<S>(R);
                               for (Eigen::Index b = 0; b < g.cols(); ++b)
                                 g.col(b) *= n.grad(0, b);
                               ln->accum(g);
                             });
}

// Reduce a 1 x B row of per-sentence losses to a scalar, honoring a 0/1
// sentence mask. Mean mode divides by the number of included sentences.
template <typename S>
Var<S> masked_batch_reduce(Var<S> rowlosses, const RowVec<S>& mask, bool mean) {
  if (rowlosses.rows() != 1 || mask.cols() != rowlosses.cols())
    throw ValidationError("masked_batch_reduce: shape mismatch");
  Node<S>* rn = rowlosses.node();
  const S count = mask.sum();
  const S denom = mean ? std::max(count, S(1)) : S(1);
  Mat<S> out(1, 1);
  out(0, 0) = (rn->value.array() * mask.array()).sum() / denom;
  RowVec<S> mk = mask;
  return rowlosses.tape()->make(std::move(out), rn->requires_grad,
                                [rn, mk, denom](Node<S>& n) {
                                  rn->accum((mk * (n.grad(0, 0) / denom)));
                                });
}

// ---------------------------------------------------------------------------
// structured ops

// 2D valid cross-correlation over per-column flattened single-channel images.
//   img:  (in_h*in_w) x B, row-major per column (index i*in_w + j)
//   kern: (k_h*k_w) x F, row-major per filter column
//   bias: F x 1
//   out:  (F*out_h*out_w) x B, index f*out_h*out_w + oi*out_w + oj
template <typename S>
Var<S> conv2d_valid(Var<S> img, Var<S> kern, Var<S> bias, int in_h, int in_w,
                    int k_h, int k_w) {
  const int out_h = in_h - k_h + 1, out_w = in_w - k_w + 1;
  if (out_h < 1 || out_w < 1)
    throw ConfigError("conv2d: kernel larger than input image");
  if (img.rows() != static_cast<Eigen::Index>(in_h) * in_w)
    throw ValidationError("conv2d: image rows != in_h*in_w");
  if (kern.rows() != static_cast<Eigen::Index>(k_h) * k_w)
    throw ValidationError("conv2d: kernel rows != k_h*k_w");
  const Eigen::Index F = kern.cols(), B = img.cols();
  if (bias.rows() != F || bias.cols() != 1)
    throw ValidationError("conv2d: bias must be F x 1");

  Node<S>*in_ = img.node(), *kn = kern.node(), *bn = bias.node();
  Mat<S> out(F * out_h * out_w, B);
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index f = 0; f < F; ++f) {
      for (int oi = 0; oi < out_h; ++oi) {
        for (int oj = 0; oj < out_w; ++oj) {
          S acc = bn->value(f, 0);
          for (int ki = 0; ki < k_h; ++ki)
            for (int kj = 0; kj < k_w; ++kj)
              acc += kn->value(ki * k_w + kj, f) *
                     in_->value((oi + ki) * in_w + (oj + kj), b);
          out(f * out_h * out_w + oi * out_w + oj, b) = acc;
        }
      }
    }
  }
  const bool req = detail::any_requires<S>({&img, &kern, &bias});
  return img.tape()->make(
      std::move(out), req,
      [in_, kn, bn, in_h, in_w, k_h, k_w, out_h, out_w, F, B](Node<S>& n) {
        Mat<S> d_img = Mat<S>::Zero(in_->value.rows(), in_->value.cols());
        Mat<S> d_kern = Mat<S>::Zero(kn->value.rows(), kn->value.cols());
        Mat<S> d_bias = Mat<S>::Zero(F, 1);
        for (Eigen::Index b = 0; b < B; ++b) {
          for (Eigen::Index f = 0; f < F; ++f) {
            for (int oi = 0; oi < out_h; ++oi) {
              for (int oj = 0; oj < out_w; ++oj) {
                const S g = n.grad(f * out_h * out_w + oi * out_w + oj, b);
                if (g == S(0)) continue;
                d_bias(f, 0) += g;
                for (int ki = 0; ki < k_h; ++ki)
                  for (int kj = 0; kj < k_w; ++kj) {
                    d_kern(ki * k_w + kj, f) +=
                        g * in_->value((oi + ki) * in_w + (oj + kj), b);
                    d_img((oi + ki) * in_w + (oj + kj), b) +=
                        g * kn->value(ki * k_w + kj, f);
                  }
              }
            }
          }
        }
        in_->accum(d_img);
        kn->accum(d_kern);
        bn->accum(d_bias);
      });
}

// Regroup n per-timestep matrices (h x B each) into one h x (B*n) matrix with
// sentence-contiguous columns: out.col(b*n + t) = steps[t].col(b).
template <typename S>
Var<S> stack_timesteps(const std::vector<Var<S>>& steps) {
  if (steps.empty()) throw ValidationError("stack_timesteps: empty input");
  const Eigen::Index h = steps.front().rows(), B = steps.front().cols();
  const Eigen::Index n = static_cast<Eigen::Index>(steps.size());
  bool req = false;
  Mat<S> out(h, B * n);
  std::vector<Node<S>*> ps;
  ps.reserve(steps.size());
  for (Eigen::Index t = 0; t < n; ++t) {
    if (steps[t].rows() != h || steps[t].cols() != B)
      throw ValidationError("stack_timesteps: inconsistent step shapes");
    for (Eigen::Index b = 0; b < B; ++b)
      out.col(b * n + t) = steps[t].value().col(b);
    req = req || steps[t].node()->requires_grad;
    ps.push_back(steps[t].node());
  }
  return steps.front().tape()->make(std::move(out), req, [ps, B, n](Node<S>& m) {
    for (Eigen::Index t = 0; t < n; ++t) {
      Node<S>* p = ps[t];
      if (!p->requires_grad) continue;
      Mat<S> g(p->value.rows(), B);
      for (Eigen::Index b = 0; b < B; ++b) g.col(b) = m.grad.col(b * n + t);
      p->accum(g);
    }
  });
}

// Per-sentence linear aggregation: with H laid out as stack_timesteps produces
// (sentence b occupies columns [b*n, b*n + n)), out_b = H_b * W_b^T where
// W_b is the (constant) n x n aggregation matrix of sentence b.
template <typename S>
Var<S> graph_aggregate(Var<S> h, std::vector<Mat<S>> weights, Eigen::Index n,
                       Eigen::Index batch) {
  if (h.cols() != n * batch) throw ValidationError("graph_aggregate: layout mismatch");
  if (static_cast<Eigen::Index>(weights.size()) != batch)
    throw ValidationError("graph_aggregate: one weight matrix per sentence required");
  Node<S>* hn = h.node();
  Mat<S> out(h.rows(), h.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    out.middleCols(b * n, n) = hn->value.middleCols(b * n, n) * weights[b].transpose();
  return h.tape()->make(std::move(out), hn->requires_grad,
                        [hn, weights = std::move(weights), n, batch](Node<S>& m) {
                          if (!hn->requires_grad) return;
                          Mat<S> g(hn->value.rows(), hn->value.cols());
                          for (Eigen::Index b = 0; b < batch; ++b)
                            g.middleCols(b * n, n) =
                                m.grad.middleCols(b * n, n) * weights[b];
                          hn->accum(g);
                        });
}

// Per-sentence max pool over the timestep axis of a stacked h x (B*n) matrix,
// restricted to positions with mask(t, b) > 0. Ties resolve to the earliest
// position. Throws if a sentence has an empty mask.
template <typename S>
Var<S> masked_max_tokens(Var<S> h, const Mat<S>& mask, Eigen::Index n,
                         Eigen::Index batch) {
  if (h.cols() != n * batch || mask.rows() != n || mask.cols() != batch)
    throw ValidationError("masked_max_tokens: shape mismatch");
  Node<S>* hn = h.node();
  const Eigen::Index rows = h.rows();
  Mat<S> out(rows, batch);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> arg(rows, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    bool any = false;
    for (Eigen::Index i = 0; i < rows; ++i) {
      S best = S(0);
      Eigen::Index best_t = -1;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (mask(t, b) <= S(0)) continue;
        const S v = hn->value(i, b * n + t);
        if (best_t < 0 || v > best) {
          best = v;
          best_t = t;
        }
      }
      if (best_t < 0) break;
      any = true;
      out(i, b) = best;
      arg(i, b) = best_t;
    }
    if (!any)
      throw ValidationError("masked_max_tokens: sentence " + std::to_string(b) +
                            " pools over an empty token set");
  }
  return h.tape()->make(std::move(out), hn->requires_grad,
                        [hn, arg, n](Node<S>& m) {
                          if (!hn->requires_grad) return;
                          if (hn->grad.size() == 0)
                            hn->grad = Mat<S>::Zero(hn->value.rows(), hn->value.cols());
                          for (Eigen::Index b = 0; b < m.grad.cols(); ++b)
                            for (Eigen::Index i = 0; i < m.grad.rows(); ++i)
                              hn->grad(i, b * n + arg(i, b)) += m.grad(i, b);
                        });
}

// Affine map with a column-broadcast bias: W x + b.
template <typename S>
Var<S> affine(Var<S> w, Var<S> x, Var<S> b) {
  return add_colvec(matmul(w, x), b);
}

}  // namespace jrrelp::ad
