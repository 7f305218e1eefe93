// Reverse-mode gradient tape over 1-D/2-D tensors. Ops record a closure that
// accumulates into parent gradients; node creation order is the topological
// order, so backward is a single reverse sweep. One tape per training step
// (or per thread for frozen-parameter forwards).
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/rng.hpp"
#include "raserec/tensor.hpp"

namespace raserec {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
MatMap<T> mat_map(TensorT<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
ConstMatMap<T> mat_map(const TensorT<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
class TapeT {
 public:
  using Id = std::size_t;

  // ---- leaves -------------------------------------------------------------

  Id constant(TensorT<T> v) { return push(std::move(v)); }

  // Leaf bound to a parameter: backward() adds its accumulated gradient into
  // the parameter's grad slot.
  Id param(ParameterT<T>& p) {
    Id id = push(p.value);
    nodes_[id].bound = &p;
    return id;
  }

  const TensorT<T>& value(Id id) const { return nodes_[id].value; }
  const TensorT<T>& grad(Id id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  // ---- elementwise and linear ops ----------------------------------------

  Id add(Id a, Id b) { return add_scaled(a, b, T(1), T(1)); }

  Id add_scaled(Id a, Id b, T ca, T cb) {
    check_same_shape(a, b, "add_scaled");
    TensorT<T> out = nodes_[a].value;
    const T* pb = nodes_[b].value.data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = ca * out[i] + cb * pb[i];
    Id id = push(std::move(out));
    record(id, [this, a, b, ca, cb, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      TensorT<T>& gb = ensure_grad(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga[i] += ca * g[i];
        gb[i] += cb * g[i];
      }
    });
    return id;
  }

  Id scale(Id a, T c) {
    TensorT<T> out = nodes_[a].value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    Id id = push(std::move(out));
    record(id, [this, a, c, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
    });
    return id;
  }

  Id mul(Id a, Id b) {
    check_same_shape(a, b, "mul");
    TensorT<T> out = nodes_[a].value;
    const T* pb = nodes_[b].value.data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
    Id id = push(std::move(out));
    record(id, [this, a, b, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      TensorT<T>& gb = ensure_grad(b);
      const T* va = nodes_[a].value.data();
      const T* vb = nodes_[b].value.data();
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga[i] += vb[i] * g[i];
        gb[i] += va[i] * g[i];
      }
    });
    return id;
  }

  // [n x d] + [d] broadcast over rows.
  Id add_row_broadcast(Id a, Id bias) {
    const TensorT<T>& va = nodes_[a].value;
    const TensorT<T>& vb = nodes_[bias].value;
    if (vb.numel() != va.cols()) throw std::invalid_argument("add_row_broadcast: bias size");
    TensorT<T> out = va;
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += vb[c];
    Id id = push(std::move(out));
    record(id, [this, a, bias, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      TensorT<T>& gb = ensure_grad(bias);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
    });
    return id;
  }

  // C = A . B,  A:[m x k], B:[k x n]
  Id matmul(Id a, Id b) {
    const TensorT<T>& va = nodes_[a].value;
    const TensorT<T>& vb = nodes_[b].value;
    if (va.cols() != vb.rows()) throw std::invalid_argument("matmul: inner dims");
    TensorT<T> out = TensorT<T>::zeros({va.rows(), vb.cols()});
    mat_map(out).noalias() = mat_map(va) * mat_map(vb);
    Id id = push(std::move(out));
    record(id, [this, a, b, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      TensorT<T>& gb = ensure_grad(b);
      mat_map(ga).noalias() += mat_map(g) * mat_map(nodes_[b].value).transpose();
      mat_map(gb).noalias() += mat_map(nodes_[a].value).transpose() * mat_map(g);
    });
    return id;
  }

  // C = A . B^T,  A:[m x k], B:[n x k]
  Id matmul_nt(Id a, Id b) {
    const TensorT<T>& va = nodes_[a].value;
    const TensorT<T>& vb = nodes_[b].value;
    if (va.cols() != vb.cols()) throw std::invalid_argument("matmul_nt: inner dims");
    TensorT<T> out = TensorT<T>::zeros({va.rows(), vb.rows()});
    mat_map(out).noalias() = mat_map(va) * mat_map(vb).transpose();
    Id id = push(std::move(out));
    record(id, [this, a, b, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      TensorT<T>& gb = ensure_grad(b);
      mat_map(ga).noalias() += mat_map(g) * mat_map(nodes_[b].value);
      mat_map(gb).noalias() += mat_map(g).transpose() * mat_map(nodes_[a].value);
    });
    return id;
  }

  // ---- structural ops ------------------------------------------------------

  // Gather rows of a table: out[i] = table[ids[i]]. Backward scatter-adds.
  Id rows_gather(Id table, std::vector<int> ids) {
    const TensorT<T>& vt = nodes_[table].value;
    std::size_t d = vt.cols();
    TensorT<T> out = TensorT<T>::zeros({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vt.rows())
        throw std::out_of_range("rows_gather: id " + std::to_string(ids[i]));
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) = vt.at(static_cast<std::size_t>(ids[i]), c);
    }
    Id id = push(std::move(out));
    record(id, [this, table, ids = std::move(ids), id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& gt = ensure_grad(table);
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t c = 0; c < g.cols(); ++c)
          gt.at(static_cast<std::size_t>(ids[i]), c) += g.at(i, c);
    });
    return id;
  }

  Id slice_cols(Id a, std::size_t c0, std::size_t c1) {
    const TensorT<T>& va = nodes_[a].value;
    if (c0 >= c1 || c1 > va.cols()) throw std::invalid_argument("slice_cols: range");
    TensorT<T> out = TensorT<T>::zeros({va.rows(), c1 - c0});
    for (std::size_t r = 0; r < va.rows(); ++r)
      for (std::size_t c = c0; c < c1; ++c) out.at(r, c - c0) = va.at(r, c);
    Id id = push(std::move(out));
    record(id, [this, a, c0, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga.at(r, c0 + c) += g.at(r, c);
    });
    return id;
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    std::size_t rows = nodes_[parts[0]].value.rows();
    std::size_t cols = 0;
    for (Id p : parts) {
      if (nodes_[p].value.rows() != rows) throw std::invalid_argument("concat_cols: rows");
      cols += nodes_[p].value.cols();
    }
    TensorT<T> out = TensorT<T>::zeros({rows, cols});
    std::size_t off = 0;
    for (Id p : parts) {
      const TensorT<T>& v = nodes_[p].value;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) out.at(r, off + c) = v.at(r, c);
      off += v.cols();
    }
    Id id = push(std::move(out));
    record(id, [this, parts, id] {
      const TensorT<T>& g = nodes_[id].grad;
      std::size_t off = 0;
      for (Id p : parts) {
        TensorT<T>& gp = ensure_grad(p);
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t c = 0; c < gp.cols(); ++c) gp.at(r, c) += g.at(r, off + c);
        off += gp.cols();
      }
    });
    return id;
  }

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    std::size_t cols = nodes_[parts[0]].value.cols();
    std::size_t rows = 0;
    for (Id p : parts) {
      if (nodes_[p].value.cols() != cols) throw std::invalid_argument("concat_rows: cols");
      rows += nodes_[p].value.rows();
    }
    TensorT<T> out = TensorT<T>::zeros({rows, cols});
    std::size_t off = 0;
    for (Id p : parts) {
      const TensorT<T>& v = nodes_[p].value;
      for (std::size_t r = 0; r < v.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(off + r, c) = v.at(r, c);
      off += v.rows();
    }
    Id id = push(std::move(out));
    record(id, [this, parts, id] {
      const TensorT<T>& g = nodes_[id].grad;
      std::size_t off = 0;
      for (Id p : parts) {
        TensorT<T>& gp = ensure_grad(p);
        for (std::size_t r = 0; r < gp.rows(); ++r)
          for (std::size_t c = 0; c < gp.cols(); ++c) gp.at(r, c) += g.at(off + r, c);
        off += gp.rows();
      }
    });
    return id;
  }

  Id last_row(Id a) {
    const TensorT<T>& va = nodes_[a].value;
    if (va.rows() == 0) throw std::invalid_argument("last_row: empty");
    std::size_t r = va.rows() - 1;
    TensorT<T> out = TensorT<T>::zeros({1, va.cols()});
    for (std::size_t c = 0; c < va.cols(); ++c) out.at(0, c) = va.at(r, c);
    Id id = push(std::move(out));
    record(id, [this, a, r, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      for (std::size_t c = 0; c < g.cols(); ++c) ga.at(r, c) += g.at(0, c);
    });
    return id;
  }

  // ---- nonlinearities ------------------------------------------------------

  Id relu(Id a) {
    TensorT<T> out = nodes_[a].value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
    Id id = push(std::move(out));
    record(id, [this, a, id] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      const T* va = nodes_[a].value.data();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += va[i] > T(0) ? g[i] : T(0);
    });
    return id;
  }

  // Per-row layer normalization with learned gain/bias vectors of size d.
  Id layer_norm(Id a, Id gain, Id bias, T eps) {
    const TensorT<T>& va = nodes_[a].value;
    std::size_t n = va.rows(), d = va.cols();
    TensorT<T> out = TensorT<T>::zeros({n, d});
    TensorT<T> xhat = TensorT<T>::zeros({n, d});
    std::vector<T> inv_std(n);
    const TensorT<T>& vg = nodes_[gain].value;
    const TensorT<T>& vb = nodes_[bias].value;
    for (std::size_t r = 0; r < n; ++r) {
      T mean = 0;
      for (std::size_t c = 0; c < d; ++c) mean += va.at(r, c);
      mean /= static_cast<T>(d);
      T var = 0;
      for (std::size_t c = 0; c < d; ++c) {
        T dv = va.at(r, c) - mean;
        var += dv * dv;
      }
      var /= static_cast<T>(d);
      T is = T(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      for (std::size_t c = 0; c < d; ++c) {
        T xh = (va.at(r, c) - mean) * is;
        xhat.at(r, c) = xh;
        out.at(r, c) = xh * vg[c] + vb[c];
      }
    }
    Id id = push(std::move(out));
    record(id, [this, a, gain, bias, id, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const TensorT<T>& g = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      TensorT<T>& gg = ensure_grad(gain);
      TensorT<T>& gb = ensure_grad(bias);
      const TensorT<T>& vg = nodes_[gain].value;
      std::size_t n = g.rows(), d = g.cols();
      for (std::size_t r = 0; r < n; ++r) {
        T sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (std::size_t c = 0; c < d; ++c) {
          T dxh = g.at(r, c) * vg[c];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat.at(r, c);
          gg[c] += g.at(r, c) * xhat.at(r, c);
          gb[c] += g.at(r, c);
        }
        T inv_d = T(1) / static_cast<T>(d);
        for (std::size_t c = 0; c < d; ++c) {
          T dxh = g.at(r, c) * vg[c];
          ga.at(r, c) +=
              inv_std[r] * (dxh - inv_d * sum_dxhat - xhat.at(r, c) * inv_d * sum_dxhat_xhat);
        }
      }
    });
    return id;
  }

  // Inverted dropout. Draws one uniform per element from `g`; scaling by
  // 1/(1-rate) keeps eval mode a no-op. rate <= 0 passes through.
  Id dropout(Id a, T rate, std::mt19937_64& g) {
    if (rate <= T(0)) return a;
    if (rate >= T(1)) throw std::invalid_argument("dropout: rate must be < 1");
    const TensorT<T>& va = nodes_[a].value;
    TensorT<T> out = va;
    std::vector<T> mask(va.numel());
    T keep_scale = T(1) / (T(1) - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = uniform01(g) >= static_cast<double>(rate) ? keep_scale : T(0);
      out[i] *= mask[i];
    }
    Id id = push(std::move(out));
    record(id, [this, a, id, mask = std::move(mask)] {
      const TensorT<T>& gr = nodes_[id].grad;
      TensorT<T>& ga = ensure_grad(a);
      for (std::size_t i = 0; i < gr.numel(); ++i) ga[i] += mask[i] * gr[i];
    });
    return id;
  }

  // Row-wise softmax with max-subtraction. With causal=true the input must be
  // square and row t is normalized over columns 0..t only (later columns 0).
  Id softmax_rows(Id a, bool causal = false) {
    const TensorT<T>& va = nodes_[a].value;
    std::size_t n = va.rows(), m = va.cols();
    if (m == 0 || n == 0) throw std::invalid_argument("softmax: empty input");
    if (causal && n != m) throw std::invalid_argument("softmax: causal needs square input");
    TensorT<T> out = TensorT<T>::zeros({n, m});
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t valid = causal ? r + 1 : m;
      T mx = va.at(r, 0);
      for (std::size_t c = 1; c < valid; ++c) mx = std::max(mx, va.at(r, c));
      T sum = 0;
      for (std::size_t c = 0; c < valid; ++c) {
        T e = std::exp(va.at(r, c) - mx);
        out.at(r, c) = e;
        sum += e;
      }
      for (std::size_t c = 0; c < valid; ++c) out.at(r, c) /= sum;
    }
    Id id = push(std::move(out));
    record(id, [this, a, id, causal] {
      const TensorT<T>& g = nodes_[id].grad;
      const TensorT<T>& p = nodes_[id].value;
      TensorT<T>& ga = ensure_grad(a);
      std::size_t n = g.rows(), m = g.cols();
      for (std::size_t r = 0; r < n; ++r) {
        std::size_t valid = causal ? r + 1 : m;
        T dot = 0;
        for (std::size_t c = 0; c < valid; ++c) dot += g.at(r, c) * p.at(r, c);
        for (std::size_t c = 0; c < valid; ++c)
          ga.at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
      }
    });
    return id;
  }

  Id sum(Id a) {
    const TensorT<T>& va = nodes_[a].value;
    T s = 0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    Id id = push(TensorT<T>({1}, {s}));
    record(id, [this, a, id] {
      T g = nodes_[id].grad[0];
      TensorT<T>& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
    return id;
  }

  // ---- fused losses --------------------------------------------------------

  // Mean over rows of -log softmax(logits)[target]. Stable log-sum-exp.
  Id cross_entropy_mean(Id logits, std::vector<int> targets) {
    const TensorT<T>& vl = nodes_[logits].value;
    std::size_t n = vl.rows(), m = vl.cols();
    if (targets.size() != n) throw std::invalid_argument("cross_entropy: target count");
    T total = 0;
    for (std::size_t r = 0; r < n; ++r) {
      int t = targets[r];
      if (t < 0 || static_cast<std::size_t>(t) >= m)
        throw std::out_of_range("cross_entropy: target id");
      T mx = vl.at(r, 0);
      for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, vl.at(r, c));
      T sum = 0;
      for (std::size_t c = 0; c < m; ++c) sum += std::exp(vl.at(r, c) - mx);
      total += (mx + std::log(sum)) - vl.at(r, static_cast<std::size_t>(t));
    }
    Id id = push(TensorT<T>({1}, {total / static_cast<T>(n)}));
    record(id, [this, logits, id, targets = std::move(targets)] {
      T g = nodes_[id].grad[0];
      const TensorT<T>& vl = nodes_[logits].value;
      TensorT<T>& gl = ensure_grad(logits);
      std::size_t n = vl.rows(), m = vl.cols();
      T inv_n = T(1) / static_cast<T>(n);
      for (std::size_t r = 0; r < n; ++r) {
        T mx = vl.at(r, 0);
        for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, vl.at(r, c));
        T sum = 0;
        for (std::size_t c = 0; c < m; ++c) sum += std::exp(vl.at(r, c) - mx);
        for (std::size_t c = 0; c < m; ++c) {
          T p = std::exp(vl.at(r, c) - mx) / sum;
          T y = (static_cast<std::size_t>(targets[r]) == c) ? T(1) : T(0);
          gl.at(r, c) += g * inv_n * (p - y);
        }
      }
    });
    return id;
  }

  // Symmetric in-batch InfoNCE over B representation pairs (rows of hp/hpp).
  // Similarity is the inner product scaled by 1/tau. For anchor hp[i] the
  // candidates are hpp[i] (positive) plus the 2(B-1) other rows of both
  // matrices; likewise for anchor hpp[i]. Returns the mean over pairs of the
  // two-direction sum, which is exactly 0 at B == 1.
  Id infonce_mean(Id hp, Id hpp, T tau) {
    if (tau <= T(0)) throw std::invalid_argument("infonce: tau must be > 0");
    check_same_shape(hp, hpp, "infonce");
    const TensorT<T>& A = nodes_[hp].value;
    const TensorT<T>& B = nodes_[hpp].value;
    std::size_t n = A.rows();
    if (n == 0) throw std::invalid_argument("infonce: empty batch");

    // Probabilities per anchor over 2n candidates (own-anchor slot masked).
    // Direction 1 anchors rows of A; direction 2 anchors rows of B.
    // Candidate layout: j in [0,n) -> other matrix row j; j in [n,2n) -> own
    // matrix row j-n (j-n == i masked out).
    auto probs = [n, tau](const TensorT<T>& anchors, const TensorT<T>& others, std::size_t i,
                          std::vector<T>& p) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < 2 * n; ++j) {
        if (j >= n && j - n == i) {
          p[j] = -std::numeric_limits<T>::infinity();
          continue;
        }
        const TensorT<T>& src = j < n ? others : anchors;
        std::size_t row = j < n ? j : j - n;
        T dot = 0;
        for (std::size_t c = 0; c < anchors.cols(); ++c) dot += anchors.at(i, c) * src.at(row, c);
        p[j] = dot / tau;
        mx = std::max(mx, p[j]);
      }
      T sum = 0;
      for (std::size_t j = 0; j < 2 * n; ++j) {
        p[j] = (j >= n && j - n == i) ? T(0) : std::exp(p[j] - mx);
        sum += p[j];
      }
      T lse = mx + std::log(sum);
      for (std::size_t j = 0; j < 2 * n; ++j) p[j] /= sum;
      return lse;
    };

    T total = 0;
    std::vector<T> p(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      T dot_pos = 0;
      for (std::size_t c = 0; c < A.cols(); ++c) dot_pos += A.at(i, c) * B.at(i, c);
      T lse1 = probs(A, B, i, p);
      total += lse1 - dot_pos / tau;
      T lse2 = probs(B, A, i, p);
      total += lse2 - dot_pos / tau;
    }
    Id id = push(TensorT<T>({1}, {total / static_cast<T>(n)}));

    record(id, [this, hp, hpp, tau, id, probs] {
      T gout = nodes_[id].grad[0];
      const TensorT<T>& A = nodes_[hp].value;
      const TensorT<T>& B = nodes_[hpp].value;
      TensorT<T>& gA = ensure_grad(hp);
      TensorT<T>& gB = ensure_grad(hpp);
      std::size_t n = A.rows(), d = A.cols();
      T coef = gout / (static_cast<T>(n) * tau);
      std::vector<T> p(2 * n);
      // one direction: anchor rows of X, positive/other rows of Y
      auto accumulate = [&](const TensorT<T>& X, const TensorT<T>& Y, TensorT<T>& gX,
                            TensorT<T>& gY) {
        for (std::size_t i = 0; i < n; ++i) {
          probs(X, Y, i, p);
          for (std::size_t j = 0; j < 2 * n; ++j) {
            if (j >= n && j - n == i) continue;
            T w = p[j] - ((j == i) ? T(1) : T(0));  // positive sits at j == i
            if (w == T(0)) continue;
            const TensorT<T>& cand = j < n ? Y : X;
            TensorT<T>& gcand = j < n ? gY : gX;
            std::size_t row = j < n ? j : j - n;
            for (std::size_t c = 0; c < d; ++c) {
              gX.at(i, c) += coef * w * cand.at(row, c);
              gcand.at(row, c) += coef * w * X.at(i, c);
            }
          }
        }
      };
      accumulate(A, B, gA, gB);
      accumulate(B, A, gB, gA);
    });
    return id;
  }

  // ---- backward ------------------------------------------------------------

  // Seeds d(root)=1 and sweeps the tape in reverse creation order. Parameter
  // gradients accumulate into their bound ParameterT slots.
  void backward(Id root) {
    if (nodes_[root].value.numel() != 1)
      throw std::invalid_argument("backward: root must be scalar");
    ensure_grad(root)[0] = T(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& node = nodes_[i];
      if (node.grad.empty()) continue;
      if (node.back) node.back();
      if (node.bound) {
        T* pg = node.bound->grad.data();
        for (std::size_t j = 0; j < node.grad.numel(); ++j) pg[j] += node.grad[j];
      }
    }
  }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // allocated on first touch during backward
    std::function<void()> back;
    ParameterT<T>* bound = nullptr;
  };

  Id push(TensorT<T> v) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, nullptr});
    return nodes_.size() - 1;
  }

  void record(Id id, std::function<void()> fn) { nodes_[id].back = std::move(fn); }

  TensorT<T>& ensure_grad(Id id) {
    Node& node = nodes_[id];
    if (node.grad.empty()) node.grad = TensorT<T>::zeros(node.value.shape());
    return node.grad;
  }

  void check_same_shape(Id a, Id b, const char* op) const {
    if (!nodes_[a].value.same_shape(nodes_[b].value))
      throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }

  std::vector<Node> nodes_;
};

// Plain softmax over a 1-D tensor, for callers outside a training step.
template <typename T>
TensorT<T> softmax(const TensorT<T>& logits) {
  if (logits.numel() == 0) throw std::invalid_argument("softmax: empty input");
  TapeT<T> tape;
  auto in = tape.constant(TensorT<T>({1, logits.numel()}, logits.vec()));
  auto out = tape.softmax_rows(in);
  return TensorT<T>({logits.numel()}, tape.value(out).vec());
}

}  // namespace raserec
