// Network building blocks on top of the tape: linear layers, layer norm,
// position-wise feed-forward, and multi-head attention (self or cross).
#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/rng.hpp"
#include "raserec/tape.hpp"
#include "raserec/tensor.hpp"

namespace raserec {

inline constexpr double kInitStd = 0.02;

template <typename T>
void init_truncated_normal(TensorT<T>& t, std::mt19937_64& g, double stddev = kInitStd) {
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(truncated_normal(g, stddev));
}

template <typename T>
struct LinearT {
  ParameterT<T> weight;  // [in x out]
  ParameterT<T> bias;    // [out]

  LinearT() = default;
  LinearT(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", TensorT<T>::zeros({in, out})),
        bias(name + ".bias", TensorT<T>::zeros({out})) {}

  void init(std::mt19937_64& g) { init_truncated_normal(weight.value, g); }

  typename TapeT<T>::Id apply(TapeT<T>& tape, typename TapeT<T>::Id x) {
    return tape.add_row_broadcast(tape.matmul(x, tape.param(weight)), tape.param(bias));
  }

  ParamRefs<T> params() { return {&weight, &bias}; }
};

template <typename T>
struct LayerNormT {
  ParameterT<T> gain;  // [d], ones
  ParameterT<T> bias;  // [d], zeros
  T eps;

  LayerNormT() = default;
  LayerNormT(const std::string& name, std::size_t d, T eps_in)
      : gain(name + ".gain", TensorT<T>::full({d}, T(1))),
        bias(name + ".bias", TensorT<T>::zeros({d})),
        eps(eps_in) {}

  typename TapeT<T>::Id apply(TapeT<T>& tape, typename TapeT<T>::Id x) {
    return tape.layer_norm(x, tape.param(gain), tape.param(bias), eps);
  }

  ParamRefs<T> params() { return {&gain, &bias}; }
};

// Two-layer position-wise feed-forward with ReLU.
template <typename T>
struct FeedForwardT {
  LinearT<T> fc1, fc2;

  FeedForwardT() = default;
  FeedForwardT(const std::string& name, std::size_t d, std::size_t hidden)
      : fc1(name + ".fc1", d, hidden), fc2(name + ".fc2", hidden, d) {}

  void init(std::mt19937_64& g) {
    fc1.init(g);
    fc2.init(g);
  }

  typename TapeT<T>::Id apply(TapeT<T>& tape, typename TapeT<T>::Id x) {
    return fc2.apply(tape, tape.relu(fc1.apply(tape, x)));
  }

  ParamRefs<T> params() {
    return {&fc1.weight, &fc1.bias, &fc2.weight, &fc2.bias};
  }
};

// Optional tap into attention internals, filled during the forward pass.
// weights[h] is the post-softmax [nq x nk] matrix of head h; head_content is
// the concatenated per-head output before the final output projection.
template <typename T>
struct AttentionProbe {
  std::vector<TensorT<T>> weights;
  TensorT<T> head_content;
};

template <typename T>
struct MhaParamsT {
  LinearT<T> query, key, value, output;
  int heads = 1;

  MhaParamsT() = default;
  MhaParamsT(const std::string& name, std::size_t d, int heads_in)
      : query(name + ".q", d, d),
        key(name + ".k", d, d),
        value(name + ".v", d, d),
        output(name + ".o", d, d),
        heads(heads_in) {
    if (heads_in <= 0 || d % static_cast<std::size_t>(heads_in) != 0)
      throw std::invalid_argument("attention: model dim must be divisible by heads");
  }

  void init(std::mt19937_64& g) {
    query.init(g);
    key.init(g);
    value.init(g);
    output.init(g);
  }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (auto* l : {&query, &key, &value, &output}) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    return out;
  }
};

// Scaled dot-product multi-head attention. queries:[nq x d], keys/values:
// [nk x d] with equal counts. With causal=true (requires nq == nk) position
// t only attends to positions <= t.
template <typename T>
typename TapeT<T>::Id multi_head_attention(TapeT<T>& tape, typename TapeT<T>::Id queries,
                                           typename TapeT<T>::Id keys,
                                           typename TapeT<T>::Id values, bool causal,
                                           MhaParamsT<T>& p,
                                           AttentionProbe<T>* probe = nullptr) {
  std::size_t d = tape.value(queries).cols();
  if (tape.value(keys).rows() != tape.value(values).rows())
    throw std::invalid_argument("attention: key/value counts differ");
  if (d % static_cast<std::size_t>(p.heads) != 0)
    throw std::invalid_argument("attention: model dim must be divisible by heads");
  std::size_t hd = d / static_cast<std::size_t>(p.heads);
  T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

  auto q = p.query.apply(tape, queries);
  auto k = p.key.apply(tape, keys);
  auto v = p.value.apply(tape, values);

  if (probe) probe->weights.clear();
  std::vector<typename TapeT<T>::Id> head_outs;
  for (int h = 0; h < p.heads; ++h) {
    std::size_t c0 = static_cast<std::size_t>(h) * hd;
    auto qh = tape.slice_cols(q, c0, c0 + hd);
    auto kh = tape.slice_cols(k, c0, c0 + hd);
    auto vh = tape.slice_cols(v, c0, c0 + hd);
    auto scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
    auto weights = tape.softmax_rows(scores, causal);
    if (probe) probe->weights.push_back(tape.value(weights));
    head_outs.push_back(tape.matmul(weights, vh));
  }
  auto content = tape.concat_cols(head_outs);
  if (probe) probe->head_content = tape.value(content);
  return p.output.apply(tape, content);
}

}  // namespace raserec
