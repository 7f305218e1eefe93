// Retrieval-augmented module: two independent multi-head cross-attention
// channels over the retrieved memory set (channel one reads the stored item
// embeddings through key similarity of the stored user representations;
// channel two swaps those roles), convexly fused with the backbone
// representation. Trained with the backbone frozen.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <type_traits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/evaluate.hpp"
#include "raserec/ivf.hpp"
#include "raserec/memory_bank.hpp"
#include "raserec/nn.hpp"
#include "raserec/pretrain.hpp"
#include "raserec/seq_encoder.hpp"

namespace raserec {

struct FusionConfig {
  double alpha = 0.5;  // backbone weight
  double beta = 0.9;   // channel-one weight inside the retrieved mix
  int topk = 20;       // memories retrieved per query (K)

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
      throw std::invalid_argument("fusion: alpha and beta must lie in [0,1]");
    if (topk < 1) throw std::invalid_argument("fusion: K must be >= 1");
  }
};

struct RamConfig {
  int hidden = 64;
  int heads = 2;
  bool residual = false;  // add the query back onto each channel output

  void validate() const {
    if (heads <= 0 || hidden <= 0 || hidden % heads != 0)
      throw std::invalid_argument("ram: hidden must be divisible by heads");
  }
};

template <typename T>
class RamT {
 public:
  using Id = typename TapeT<T>::Id;

  RamT() = default;
  explicit RamT(const RamConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::size_t d = static_cast<std::size_t>(cfg.hidden);
    channel1_ = MhaParamsT<T>("ram.ch1", d, cfg.heads);
    channel2_ = MhaParamsT<T>("ram.ch2", d, cfg.heads);
  }

  void init(std::mt19937_64& g) {
    channel1_.init(g);
    channel2_.init(g);
  }

  const RamConfig& config() const { return cfg_; }

  ParamRefs<T> params() {
    ParamRefs<T> out;
    for (auto* p : channel1_.params()) out.push_back(p);
    for (auto* p : channel2_.params()) out.push_back(p);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->value.numel();
    return n;
  }

  // Channel one: query h, keys = retrieved user representations, values =
  // retrieved target-item embeddings.
  Id channel_one(TapeT<T>& tape, Id h, Id retrieved_keys, Id retrieved_values,
                 AttentionProbe<T>* probe = nullptr) {
    Id out = multi_head_attention(tape, h, retrieved_keys, retrieved_values, /*causal=*/false,
                                  channel1_, probe);
    return cfg_.residual ? tape.add(out, h) : out;
  }

  // Channel two: the mirror image, aggregating the stored representations.
  Id channel_two(TapeT<T>& tape, Id h, Id retrieved_keys, Id retrieved_values,
                 AttentionProbe<T>* probe = nullptr) {
    Id out = multi_head_attention(tape, h, retrieved_values, retrieved_keys, /*causal=*/false,
                                  channel2_, probe);
    return cfg_.residual ? tape.add(out, h) : out;
  }

  // h_fused = alpha*h + (1-alpha)*(beta*c1 + (1-beta)*c2)
  static Id fuse(TapeT<T>& tape, Id h, Id c1, Id c2, double alpha, double beta) {
    if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
      throw std::invalid_argument("fuse: alpha and beta must lie in [0,1]");
    Id mix = tape.add_scaled(c1, c2, static_cast<T>(beta), static_cast<T>(1.0 - beta));
    return tape.add_scaled(h, mix, static_cast<T>(alpha), static_cast<T>(1.0 - alpha));
  }

  // Eval-path augmentation over a concrete retrieved set (raw keys).
  TensorT<T> augment(const TensorT<T>& h, const TensorT<T>& keys, const TensorT<T>& values,
                     double alpha, double beta) {
    TapeT<T> tape;
    Id hid = tape.constant(h);
    Id k = tape.constant(keys);
    Id v = tape.constant(values);
    Id c1 = channel_one(tape, hid, k, v);
    Id c2 = channel_two(tape, hid, k, v);
    return tape.value(fuse(tape, hid, c1, c2, alpha, beta));
  }

 private:
  RamConfig cfg_;
  MhaParamsT<T> channel1_, channel2_;
};

// Gathers the raw keys/values of a retrieved set into [K x d] tensors.
template <typename T>
void retrieved_tensors(const MemoryBankT<T>& bank, const std::vector<RetrievedT<T>>& hits,
                       TensorT<T>& keys, TensorT<T>& values) {
  keys = TensorT<T>::zeros({hits.size(), bank.dim});
  values = TensorT<T>::zeros({hits.size(), bank.dim});
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const auto& e = bank.entries[static_cast<std::size_t>(hits[i].entry)];
    for (std::size_t c = 0; c < bank.dim; ++c) {
      keys.at(i, c) = e.key[c];
      values.at(i, c) = e.value[c];
    }
  }
}

template <typename T>
struct RetrievalTraceItem {
  int entry = 0;
  T cosine = T(0);
  int origin_user = 0;
  int origin_t = 0;
  int target = 0;
};

template <typename T>
struct AugmentedInference {
  std::vector<int> top_items;
  std::vector<T> top_scores;
  std::vector<RetrievalTraceItem<T>> trace;
  bool retrieval_fallback = false;  // zero candidates; scored with h alone
};

// Full-catalog scores for one query representation. When retrieval yields no
// candidate the fused representation degenerates to h and `fallback` is set.
template <typename T>
std::vector<T> augmented_scores(BackboneT<T>& backbone, const MemoryBankT<T>& bank,
                                const IvfIndexT<T>& index, RamT<T>& ram, const TensorT<T>& h,
                                const FusionConfig& fusion, int nprobe,
                                const EntryOrigin* exclude = nullptr,
                                const std::type_identity_t<EntryFilterT<T>>& keep = nullptr,
                                std::type_identity_t<std::vector<RetrievedT<T>>*> hits_out = nullptr,
                                bool* fallback = nullptr) {
  fusion.validate();
  auto hits = retrieve_topk(index, bank, h.vec(), static_cast<std::size_t>(fusion.topk), nprobe,
                            exclude, keep);
  if (hits_out) *hits_out = hits;
  if (fallback) *fallback = hits.empty();
  if (hits.empty()) return backbone.score_items(h);
  TensorT<T> keys, values;
  retrieved_tensors(bank, hits, keys, values);
  TensorT<T> fused = ram.augment(h, keys, values, fusion.alpha, fusion.beta);
  return backbone.score_items(fused);
}

// End-to-end inference: encode, retrieve, fuse, rank, with a retrieval trace
// for auditability.
template <typename T>
AugmentedInference<T> augmented_infer(const std::vector<int>& prefix, BackboneT<T>& backbone,
                                      const MemoryBankT<T>& bank, const IvfIndexT<T>& index,
                                      RamT<T>& ram, const FusionConfig& fusion, int top_n,
                                      int nprobe) {
  AugmentedInference<T> out;
  TensorT<T> h = backbone.encode_eval(prefix);
  std::vector<RetrievedT<T>> hits;
  auto scores = augmented_scores(backbone, bank, index, ram, h, fusion, nprobe, nullptr, nullptr,
                                 &hits, &out.retrieval_fallback);
  for (const auto& hit : hits) {
    const auto& e = bank.entries[static_cast<std::size_t>(hit.entry)];
    out.trace.push_back({hit.entry, hit.cosine, e.origin_user, e.origin_t, e.target});
  }
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(top_n), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](int a, int b) {
                      T sa = scores[static_cast<std::size_t>(a)];
                      T sb = scores[static_cast<std::size_t>(b)];
                      return sa != sb ? sa > sb : a < b;
                    });
  order.resize(take);
  out.top_items = order;
  for (int id : order) out.top_scores.push_back(scores[static_cast<std::size_t>(id)]);
  return out;
}

// Evaluation adapter; counts zero-candidate fallbacks across calls.
template <typename T>
InferFn<T> augmented_scorer(BackboneT<T>& backbone, const MemoryBankT<T>& bank,
                            const IvfIndexT<T>& index, RamT<T>& ram, const FusionConfig& fusion,
                            int nprobe, std::atomic<std::size_t>* fallback_count = nullptr) {
  return [&backbone, &bank, &index, &ram, fusion, nprobe, fallback_count](
             const std::vector<int>& prefix, int) {
    bool fb = false;
    TensorT<T> h = backbone.encode_eval(prefix);
    auto scores = augmented_scores(backbone, bank, index, ram, h, fusion, nprobe, nullptr, nullptr,
                                   nullptr, &fb);
    if (fb && fallback_count) ++*fallback_count;
    return scores;
  };
}

struct RaftConfig {
  double lr = 0.001;
  int batch = 1024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 42;
  int threads = 1;
  int nprobe = 1;
  FusionConfig fusion;

  void validate() const {
    fusion.validate();
    if (patience < 1 || batch < 1 || max_epochs < 1) throw std::invalid_argument("raft: config");
  }
};

struct RaftResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_hr10 = 0;
  bool diverged = false;
};

// Retrieval-augmented fine-tuning. The backbone is frozen; only the RAM's
// parameters are optimized. Training queries are the bank's own keys (the
// bank enumerates exactly the train examples), each excluding its own entry;
// validation uses the full bank with no exclusion since validation targets
// never enter it.
template <typename T>
RaftResult raft_train(RamT<T>& ram, BackboneT<T>& backbone,
                      const std::string& backbone_checkpoint_id, const MemoryBankT<T>& bank,
                      const IvfIndexT<T>& index, const Split& split, const RaftConfig& cfg,
                      const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (bank.checkpoint_id != backbone_checkpoint_id)
    throw LineageError("raft: bank was encoded with checkpoint '" + bank.checkpoint_id +
                       "' but the backbone is '" + backbone_checkpoint_id + "'");
  if (bank.size() == 0) throw std::invalid_argument("raft: empty memory bank");

  backbone.set_trainable(false);
  auto params = ram.params();
  AdamT<T> adam(params, static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1),
                static_cast<T>(cfg.beta2), static_cast<T>(cfg.adam_eps));

  RaftResult result;
  std::vector<TensorT<T>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (auto* p : params) best_values.push_back(p->value);
  };
  auto restore = [&] {
    for (std::size_t i = 0; i < params.size() && i < best_values.size(); ++i)
      params[i]->value = best_values[i];
  };
  snapshot();

  std::vector<int> order(bank.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto shuffle_rng = substream(cfg.seed, "raft-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_inplace(order, shuffle_rng);

    double loss_sum = 0;
    std::size_t loss_n = 0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      TapeT<T> tape;
      std::vector<typename TapeT<T>::Id> fused_rows;
      std::vector<int> targets;
      for (std::size_t bi = start; bi < end; ++bi) {
        const auto& entry = bank.entries[static_cast<std::size_t>(order[bi])];
        EntryOrigin self{entry.origin_user, entry.origin_t};
        auto hits = retrieve_topk(index, bank, entry.key,
                                  static_cast<std::size_t>(cfg.fusion.topk), cfg.nprobe, &self);
        TensorT<T> h = TensorT<T>::row_vector(entry.key);
        auto hid = tape.constant(h);
        typename TapeT<T>::Id fused;
        if (hits.empty()) {
          fused = hid;
        } else {
          TensorT<T> keys, values;
          retrieved_tensors(bank, hits, keys, values);
          auto c1 = ram.channel_one(tape, hid, tape.constant(keys), tape.constant(values));
          auto c2 = ram.channel_two(tape, hid, tape.constant(keys), tape.constant(values));
          fused = RamT<T>::fuse(tape, hid, c1, c2, cfg.fusion.alpha, cfg.fusion.beta);
        }
        fused_rows.push_back(fused);
        targets.push_back(entry.target);
      }
      auto scores = tape.matmul_nt(tape.concat_rows(fused_rows),
                                   tape.constant(backbone.item_embeddings().value));
      auto loss = tape.cross_entropy_mean(scores, targets);
      double value = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(value)) {
        finite = false;
        break;
      }
      zero_grads(params);
      tape.backward(loss);
      adam.step();
      loss_sum += value * static_cast<double>(end - start);
      loss_n += end - start;
    }
    if (!finite) {
      result.diverged = true;
      restore();
      break;
    }

    std::atomic<std::size_t> fallbacks{0};
    auto scorer = augmented_scorer(backbone, bank, index, ram, cfg.fusion, cfg.nprobe, &fallbacks);
    auto val = compute_ranks<T>(scorer, split.valid, EvalOptions{0, 0, 0, cfg.threads});
    EpochLog entry;
    entry.epoch = epoch;
    entry.rec_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0;
    entry.val_hr10 = hr_at_n(val, 10);
    entry.val_ndcg10 = ndcg_at_n(val, 10);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (result.best_epoch < 0 || entry.val_hr10 > result.best_hr10) {
      result.best_epoch = epoch;
      result.best_hr10 = entry.val_hr10;
      snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore();
  return result;
}

}  // namespace raserec
