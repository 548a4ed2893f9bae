#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "graphkd/error.hpp"
#include "graphkd/tensor.hpp"

// Reverse-mode autodiff over Tensor values. Nodes form a DAG through their
// parent lists; backward() replays creation order in reverse. Ops whose
// inputs carry no gradient produce detached leaves, so inference pays nothing
// for the tape.
namespace graphkd::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated on demand during backward
  std::vector<Var> parents;
  std::function<void(Node&)> back;
  std::uint64_t seq = 0;
  bool requires_grad = false;

  Tensor& ensure_grad() {
    if (!grad.same_shape(val)) grad = Tensor(val.dims());
    return grad;
  }
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->requires_grad = requires_grad;
  n->seq = next_seq();
  return n;
}

inline Var constant(Tensor value) { return leaf(std::move(value), false); }

inline Var scalar_const(double v) {
  return constant(Tensor::from({v}));
}

inline double scalar_value(const Var& v) {
  require(v->val.size() == 1, errkind::kDimensionMismatch,
          "scalar_value on non-scalar");
  return v->val[0];
}

namespace detail {

inline bool any_grad(std::initializer_list<const Var*> vs) {
  for (const Var* v : vs)
    if ((*v)->requires_grad) return true;
  return false;
}

inline Var make(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> back) {
  bool rg = false;
  for (const Var& p : parents) rg = rg || p->requires_grad;
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->seq = next_seq();
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->back = std::move(back);
  }
  return n;
}

}  // namespace detail

// Runs reverse accumulation from a scalar root. Gradients of all reachable
// nodes are reset first, so repeated calls are independent.
inline void backward(const Var& root) {
  require(root->val.size() == 1, errkind::kDimensionMismatch,
          "backward root must be scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const Var& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  for (Node* n : order) {
    n->ensure_grad().fill(0.0);
  }
  root->grad[0] = 1.0;
  for (Node* n : order) {
    if (n->back) n->back(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), errkind::kDimensionMismatch, "add shape");
  Tensor out = a->val;
  out.add_inplace(b->val);
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[static_cast<std::size_t>(k)];
      if (!p.requires_grad) continue;
      Tensor& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), errkind::kDimensionMismatch, "sub shape");
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->val[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), errkind::kDimensionMismatch, "mul shape");
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->val[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pb.val[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pa.val[i];
    }
  });
}

inline Var div(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), errkind::kDimensionMismatch, "div shape");
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b->val[i];
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] / pb.val[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] -= self.grad[i] * self.val[i] / pb.val[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a->val;
  out.scale_inplace(s);
  return detail::make(std::move(out), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

inline Var add_const(const Var& a, double c) {
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// sqrt with subgradient 0 at 0, so norms of identical vectors backprop
// cleanly instead of producing NaN.
inline Var sqrt_v(const Var& a) {
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (self.val[i] > 0.0) g[i] += self.grad[i] * 0.5 / self.val[i];
    }
  });
}

inline Var abs_v(const Var& a) {
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double x = p.val[i];
      double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      g[i] += self.grad[i] * sgn;
    }
  });
}

inline Var relu(const Var& a) {
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.val[i] > 0.0) g[i] += self.grad[i];
  });
}

inline Var clamp_min(const Var& a, double lo) {
  Tensor out = a->val;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(lo, out[i]);
  return detail::make(std::move(out), {a}, [lo](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.val[i] > lo) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and vector ops
// ---------------------------------------------------------------------------

inline Var sum_all(const Var& a) {
  Tensor out = Tensor::from({a->val.sum()});
  return detail::make(std::move(out), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

inline Var mean_all(const Var& a) {
  double inv = 1.0 / static_cast<double>(a->val.size());
  Tensor out = Tensor::from({a->val.sum() * inv});
  return detail::make(std::move(out), {a}, [inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv;
  });
}

inline Var dot(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), errkind::kDimensionMismatch, "dot shape");
  double s = 0.0;
  for (std::size_t i = 0; i < a->val.size(); ++i) s += a->val[i] * b->val[i];
  return detail::make(Tensor::from({s}), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[0] * pb.val[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[0] * pa.val[i];
    }
  });
}

// Scalar times vector.
inline Var mul_sv(const Var& s, const Var& v) {
  require(s->val.size() == 1, errkind::kDimensionMismatch, "mul_sv scalar");
  Tensor out = v->val;
  out.scale_inplace(s->val[0]);
  return detail::make(std::move(out), {s, v}, [](Node& self) {
    Node& ps = *self.parents[0];
    Node& pv = *self.parents[1];
    if (ps.requires_grad) {
      Tensor& g = ps.ensure_grad();
      for (std::size_t i = 0; i < pv.val.size(); ++i)
        g[0] += self.grad[i] * pv.val[i];
    }
    if (pv.requires_grad) {
      Tensor& g = pv.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * ps.val[0];
    }
  });
}

// Vector divided by scalar.
inline Var div_vs(const Var& v, const Var& s) {
  require(s->val.size() == 1, errkind::kDimensionMismatch, "div_vs scalar");
  Tensor out = v->val;
  out.scale_inplace(1.0 / s->val[0]);
  return detail::make(std::move(out), {v, s}, [](Node& self) {
    Node& pv = *self.parents[0];
    Node& ps = *self.parents[1];
    double sv = ps.val[0];
    if (pv.requires_grad) {
      Tensor& g = pv.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / sv;
    }
    if (ps.requires_grad) {
      Tensor& g = ps.ensure_grad();
      for (std::size_t i = 0; i < self.val.size(); ++i)
        g[0] -= self.grad[i] * self.val[i] / sv;
    }
  });
}

inline Var concat2(const Var& a, const Var& b) {
  int n = static_cast<int>(a->val.size() + b->val.size());
  Tensor out = Tensor::vector(n);
  std::copy(a->val.raw().begin(), a->val.raw().end(), out.raw().begin());
  std::copy(b->val.raw().begin(), b->val.raw().end(),
            out.raw().begin() + static_cast<long>(a->val.size()));
  return detail::make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    std::size_t na = pa.val.size();
    if (pa.requires_grad) {
      Tensor& g = pa.ensure_grad();
      for (std::size_t i = 0; i < na; ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[na + i];
    }
  });
}

// y = W x + b with W: [O,I], x: [I], b: [O].
inline Var linear(const Var& W, const Var& b, const Var& x) {
  int O = W->val.dim(0);
  int I = W->val.dim(1);
  require(x->val.rank() == 1 && x->val.dim(0) == I,
          errkind::kDimensionMismatch, "linear input dim");
  require(b->val.rank() == 1 && b->val.dim(0) == O,
          errkind::kDimensionMismatch, "linear bias dim");
  Tensor out = Tensor::vector(O);
  for (int o = 0; o < O; ++o) {
    double s = b->val(o);
    for (int i = 0; i < I; ++i) s += W->val(o, i) * x->val(i);
    out(o) = s;
  }
  return detail::make(std::move(out), {W, b, x}, [O, I](Node& self) {
    Node& pW = *self.parents[0];
    Node& pb = *self.parents[1];
    Node& px = *self.parents[2];
    if (pW.requires_grad) {
      Tensor& g = pW.ensure_grad();
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < I; ++i) g(o, i) += self.grad(o) * px.val(i);
    }
    if (pb.requires_grad) {
      Tensor& g = pb.ensure_grad();
      for (int o = 0; o < O; ++o) g(o) += self.grad(o);
    }
    if (px.requires_grad) {
      Tensor& g = px.ensure_grad();
      for (int o = 0; o < O; ++o)
        for (int i = 0; i < I; ++i) g(i) += self.grad(o) * pW.val(o, i);
    }
  });
}

// ---------------------------------------------------------------------------
// Spatial ops (CHW layout)
// ---------------------------------------------------------------------------

// Odd square kernel, stride 1, zero padding k/2 (shape-preserving).
inline Var conv2d(const Var& x, const Var& W, const Var& b) {
  int IC = x->val.dim(0), H = x->val.dim(1), Wd = x->val.dim(2);
  int OC = W->val.dim(0);
  int K = W->val.dim(2);
  require(W->val.dim(1) == IC, errkind::kDimensionMismatch,
          "conv2d channel mismatch");
  require(K % 2 == 1 && W->val.dim(3) == K, errkind::kDimensionMismatch,
          "conv2d kernel must be odd square");
  int P = K / 2;
  Tensor out = Tensor::chw(OC, H, Wd);
  for (int oc = 0; oc < OC; ++oc) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < Wd; ++xx) {
        double s = b->val(oc);
        for (int ic = 0; ic < IC; ++ic) {
          for (int dy = 0; dy < K; ++dy) {
            int sy = y + dy - P;
            if (sy < 0 || sy >= H) continue;
            for (int dx = 0; dx < K; ++dx) {
              int sx = xx + dx - P;
              if (sx < 0 || sx >= Wd) continue;
              s += W->val(oc, ic, dy, dx) * x->val(ic, sy, sx);
            }
          }
        }
        out(oc, y, xx) = s;
      }
    }
  }
  return detail::make(
      std::move(out), {x, W, b}, [IC, OC, H, Wd, K, P](Node& self) {
        Node& px = *self.parents[0];
        Node& pW = *self.parents[1];
        Node& pb = *self.parents[2];
        bool gx = px.requires_grad, gW = pW.requires_grad;
        Tensor* xg = gx ? &px.ensure_grad() : nullptr;
        Tensor* Wg = gW ? &pW.ensure_grad() : nullptr;
        if (pb.requires_grad) {
          Tensor& bg = pb.ensure_grad();
          for (int oc = 0; oc < OC; ++oc) {
            double s = 0.0;
            for (int y = 0; y < H; ++y)
              for (int xx = 0; xx < Wd; ++xx) s += self.grad(oc, y, xx);
            bg(oc) += s;
          }
        }
        if (!gx && !gW) return;
        for (int oc = 0; oc < OC; ++oc) {
          for (int y = 0; y < H; ++y) {
            for (int xx = 0; xx < Wd; ++xx) {
              double go = self.grad(oc, y, xx);
              if (go == 0.0) continue;
              for (int ic = 0; ic < IC; ++ic) {
                for (int dy = 0; dy < K; ++dy) {
                  int sy = y + dy - P;
                  if (sy < 0 || sy >= H) continue;
                  for (int dx = 0; dx < K; ++dx) {
                    int sx = xx + dx - P;
                    if (sx < 0 || sx >= Wd) continue;
                    if (gW) (*Wg)(oc, ic, dy, dx) += go * px.val(ic, sy, sx);
                    if (gx) (*xg)(ic, sy, sx) += go * pW.val(oc, ic, dy, dx);
                  }
                }
              }
            }
          }
        }
      });
}

inline Var maxpool2(const Var& x) {
  int C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
  require(H % 2 == 0 && W % 2 == 0, errkind::kDimensionMismatch,
          "maxpool2 needs even spatial dims");
  int OH = H / 2, OW = W / 2;
  Tensor out = Tensor::chw(C, OH, OW);
  std::vector<int> arg(static_cast<std::size_t>(C) * OH * OW);
  std::size_t k = 0;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < OH; ++y) {
      for (int xx = 0; xx < OW; ++xx, ++k) {
        double best = -1e300;
        int best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            int sy = 2 * y + dy, sx = 2 * xx + dx;
            double v = x->val(c, sy, sx);
            if (v > best) {
              best = v;
              best_idx = (c * H + sy) * W + sx;
            }
          }
        }
        out(c, y, xx) = best;
        arg[k] = best_idx;
      }
    }
  }
  return detail::make(std::move(out), {x}, [arg](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i)
      g[static_cast<std::size_t>(arg[i])] += self.grad[i];
  });
}

// [C,S,S] -> [C] spatial average.
inline Var spatial_mean(const Var& x) {
  int C = x->val.dim(0), S1 = x->val.dim(1), S2 = x->val.dim(2);
  double inv = 1.0 / static_cast<double>(S1 * S2);
  Tensor out = Tensor::vector(C);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int y = 0; y < S1; ++y)
      for (int xx = 0; xx < S2; ++xx) s += x->val(c, y, xx);
    out(c) = s * inv;
  }
  return detail::make(std::move(out), {x}, [C, S1, S2, inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (int c = 0; c < C; ++c) {
      double go = self.grad(c) * inv;
      for (int y = 0; y < S1; ++y)
        for (int xx = 0; xx < S2; ++xx) g(c, y, xx) += go;
    }
  });
}

// ---------------------------------------------------------------------------
// Classification losses
// ---------------------------------------------------------------------------

inline Var log_softmax(const Var& x) {
  int K = x->val.dim(0);
  double mx = -1e300;
  for (int i = 0; i < K; ++i) mx = std::max(mx, x->val(i));
  double lse = 0.0;
  for (int i = 0; i < K; ++i) lse += std::exp(x->val(i) - mx);
  lse = mx + std::log(lse);
  Tensor out = Tensor::vector(K);
  for (int i = 0; i < K; ++i) out(i) = x->val(i) - lse;
  return detail::make(std::move(out), {x}, [K](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    double gsum = 0.0;
    for (int i = 0; i < K; ++i) gsum += self.grad(i);
    for (int i = 0; i < K; ++i)
      g(i) += self.grad(i) - std::exp(self.val(i)) * gsum;
  });
}

// Cross entropy of a single logits row against an integer target.
inline Var softmax_ce(const Var& logits, int target) {
  Var ls = log_softmax(logits);
  int K = logits->val.dim(0);
  require(target >= 0 && target < K, errkind::kDimensionMismatch,
          "softmax_ce target out of range");
  Tensor out = Tensor::from({-ls->val(target)});
  return detail::make(std::move(out), {ls}, [target](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad()(target) -= self.grad[0];
  });
}

// Sum of w_i * BCE(logit_i, label_i); weights fold sampling and class
// balancing. Numerically stable formulation.
inline Var weighted_bce_logits(const Var& logits, const Tensor& labels,
                               const Tensor& weights) {
  require(logits->val.same_shape(labels) && logits->val.same_shape(weights),
          errkind::kDimensionMismatch, "bce shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits->val.size(); ++i) {
    double w = weights[i];
    if (w == 0.0) continue;
    double z = logits->val[i], y = labels[i];
    double l = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    total += w * l;
  }
  return detail::make(Tensor::from({total}), {logits},
                      [labels, weights](Node& self) {
                        Node& p = *self.parents[0];
                        if (!p.requires_grad) return;
                        Tensor& g = p.ensure_grad();
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          double w = weights[i];
                          if (w == 0.0) continue;
                          double z = p.val[i];
                          double sig = 1.0 / (1.0 + std::exp(-z));
                          g[i] += self.grad[0] * w * (sig - labels[i]);
                        }
                      });
}

// Smooth L1 (Huber with delta=1) summed over elements against a constant
// target.
inline Var huber_sum(const Var& pred, const Tensor& target) {
  require(pred->val.same_shape(target), errkind::kDimensionMismatch,
          "huber shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pred->val.size(); ++i) {
    double d = pred->val[i] - target[i];
    double a = std::fabs(d);
    total += a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  return detail::make(Tensor::from({total}), {pred}, [target](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = p.val[i] - target[i];
      g[i] += self.grad[0] * std::clamp(d, -1.0, 1.0);
    }
  });
}

// ---------------------------------------------------------------------------
// Small composition helpers
// ---------------------------------------------------------------------------

inline Var norm2_v(const Var& v) { return sqrt_v(dot(v, v)); }

inline Var cosine(const Var& a, const Var& b) {
  return div(dot(a, b), mul(norm2_v(a), norm2_v(b)));
}

inline Var sum_scalars(const std::vector<Var>& xs) {
  require(!xs.empty(), errkind::kNoNodes, "sum over empty scalar list");
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

inline Var mean_scalars(const std::vector<Var>& xs) {
  return scale(sum_scalars(xs), 1.0 / static_cast<double>(xs.size()));
}

}  // namespace graphkd::ad
