// Transformer backbone: item + right-aligned position embeddings, a stack of
// unidirectional (causal) attention blocks with post-norm residuals, and
// full-catalog inner-product scoring. The last position's hidden state is the
// user representation.
#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/data.hpp"
#include "raserec/nn.hpp"
#include "raserec/tape.hpp"
#include "raserec/tensor.hpp"

namespace raserec {

struct BackboneConfig {
  int vocab = 0;
  int hidden = 64;       // d
  int max_len = 50;      // T
  int layers = 2;        // L
  int heads = 2;
  int ffn_hidden = 0;    // 0 -> 4*d
  double dropout = 0.5;
  double ln_eps = 1e-8;

  int ffn_dim() const { return ffn_hidden > 0 ? ffn_hidden : 4 * hidden; }

  void validate() const {
    if (vocab <= 0) throw std::invalid_argument("backbone: vocab must be > 0");
    if (hidden <= 0 || max_len <= 0 || layers < 0) throw std::invalid_argument("backbone: dims");
    if (heads <= 0 || hidden % heads != 0)
      throw std::invalid_argument("backbone: hidden must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("backbone: dropout");
  }
};

template <typename T>
class BackboneT {
 public:
  using Id = typename TapeT<T>::Id;

  BackboneT() = default;

  explicit BackboneT(const BackboneConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::size_t d = static_cast<std::size_t>(cfg.hidden);
    item_emb_ = ParameterT<T>("item_emb",
                              TensorT<T>::zeros({static_cast<std::size_t>(cfg.vocab), d}));
    pos_emb_ = ParameterT<T>("pos_emb",
                             TensorT<T>::zeros({static_cast<std::size_t>(cfg.max_len), d}));
    input_ln_ = LayerNormT<T>("input_ln", d, static_cast<T>(cfg.ln_eps));
    for (int l = 0; l < cfg.layers; ++l) {
      std::string base = "layer" + std::to_string(l);
      layers_.push_back(Layer{
          MhaParamsT<T>(base + ".attn", d, cfg.heads),
          LayerNormT<T>(base + ".ln1", d, static_cast<T>(cfg.ln_eps)),
          LayerNormT<T>(base + ".ln2", d, static_cast<T>(cfg.ln_eps)),
          FeedForwardT<T>(base + ".ffn", d, static_cast<std::size_t>(cfg.ffn_dim())),
      });
    }
  }

  void init(std::mt19937_64& g) {
    init_truncated_normal(item_emb_.value, g);
    init_truncated_normal(pos_emb_.value, g);
    for (auto& layer : layers_) {
      layer.attn.init(g);
      layer.ffn.init(g);
    }
  }

  const BackboneConfig& config() const { return cfg_; }
  ParameterT<T>& item_embeddings() { return item_emb_; }
  const ParameterT<T>& item_embeddings() const { return item_emb_; }
  ParameterT<T>& position_embeddings() { return pos_emb_; }

  ParamRefs<T> params() {
    ParamRefs<T> out{&item_emb_, &pos_emb_};
    if (!layers_.empty())
      for (auto* p : input_ln_.params()) out.push_back(p);
    for (auto& layer : layers_) {
      for (auto* p : layer.attn.params()) out.push_back(p);
      for (auto* p : layer.ln1.params()) out.push_back(p);
      for (auto* p : layer.ln2.params()) out.push_back(p);
      for (auto* p : layer.ffn.params()) out.push_back(p);
    }
    return out;
  }

  void set_trainable(bool trainable) {
    for (auto* p : params()) p->trainable = trainable;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->value.numel();
    return n;
  }

  // Positions are right-aligned: a prefix of length n occupies the last n
  // slots of the position table, so the last item always sits at index T-1.
  std::vector<int> positions_for(std::size_t len) const {
    std::vector<int> pos(len);
    for (std::size_t i = 0; i < len; ++i)
      pos[i] = static_cast<int>(static_cast<std::size_t>(cfg_.max_len) - len + i);
    return pos;
  }

  // H0 rows: item embedding + position embedding (pre-truncated prefix).
  Id embed(TapeT<T>& tape, const std::vector<int>& prefix) {
    if (prefix.empty()) throw std::invalid_argument("embed: empty prefix");
    if (prefix.size() > static_cast<std::size_t>(cfg_.max_len))
      throw std::invalid_argument("embed: prefix longer than max_len");
    auto items = tape.rows_gather(tape.param(item_emb_), prefix);
    auto pos = tape.rows_gather(tape.param(pos_emb_), positions_for(prefix.size()));
    return tape.add(items, pos);
  }

  TensorT<T> embed_eval(const std::vector<int>& prefix) {
    TapeT<T> tape;
    return tape.value(embed(tape, truncate_sequence(prefix, static_cast<std::size_t>(cfg_.max_len))));
  }

  // Full forward over all positions; returns the [n x d] hidden matrix of the
  // final layer. Truncates internally. With layers == 0 this is just H0.
  Id encode_all(TapeT<T>& tape, const std::vector<int>& prefix, bool train_mode,
                std::mt19937_64* dropout_rng = nullptr) {
    auto trimmed = truncate_sequence(prefix, static_cast<std::size_t>(cfg_.max_len));
    Id h = embed(tape, trimmed);
    if (layers_.empty()) return h;
    T rate = train_mode ? static_cast<T>(cfg_.dropout) : T(0);
    if (rate > T(0) && dropout_rng == nullptr)
      throw std::invalid_argument("encode: train mode needs a dropout rng");
    auto drop = [&](Id x) { return rate > T(0) ? tape.dropout(x, rate, *dropout_rng) : x; };
    h = drop(input_ln_.apply(tape, h));
    for (auto& layer : layers_) {
      Id attn = multi_head_attention(tape, h, h, h, /*causal=*/true, layer.attn);
      h = layer.ln1.apply(tape, tape.add(drop(attn), h));
      Id ffn = layer.ffn.apply(tape, h);
      h = layer.ln2.apply(tape, tape.add(drop(ffn), h));
    }
    return h;
  }

  // User representation: last row of the final hidden matrix, shape [1 x d].
  Id encode(TapeT<T>& tape, const std::vector<int>& prefix, bool train_mode,
            std::mt19937_64* dropout_rng = nullptr) {
    return tape.last_row(encode_all(tape, prefix, train_mode, dropout_rng));
  }

  // Deterministic eval-mode representation; safe to call concurrently while
  // no thread mutates the parameters.
  TensorT<T> encode_eval(const std::vector<int>& prefix) {
    TapeT<T> tape;
    return tape.value(encode(tape, prefix, /*train_mode=*/false));
  }

  TensorT<T> encode_all_eval(const std::vector<int>& prefix) {
    TapeT<T> tape;
    return tape.value(encode_all(tape, prefix, /*train_mode=*/false));
  }

  // Inner-product score of h against every catalog item.
  std::vector<T> score_items(const TensorT<T>& h) const {
    std::size_t v = item_emb_.value.rows(), d = item_emb_.value.cols();
    std::vector<T> scores(v, T(0));
    for (std::size_t i = 0; i < v; ++i) {
      T dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += item_emb_.value.at(i, c) * h[c];
      scores[i] = dot;
    }
    return scores;
  }

 private:
  struct Layer {
    MhaParamsT<T> attn;
    LayerNormT<T> ln1, ln2;
    FeedForwardT<T> ffn;
  };

  BackboneConfig cfg_;
  ParameterT<T> item_emb_;
  ParameterT<T> pos_emb_;
  LayerNormT<T> input_ln_;
  std::vector<Layer> layers_;
};

}  // namespace raserec
