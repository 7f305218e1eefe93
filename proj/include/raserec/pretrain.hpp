// Stage one: joint training of the next-item objective (full-catalog softmax
// cross entropy) and the retrieval objective (symmetric in-batch InfoNCE over
// same-target sequence pairs), with Adam and early stopping on validation
// HR@10.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "raserec/data.hpp"
#include "raserec/evaluate.hpp"
#include "raserec/seq_encoder.hpp"
#include "raserec/tape.hpp"

namespace raserec {

struct PretrainConfig {
  double lr = 0.001;
  int batch = 1024;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_epochs = 100;
  int patience = 10;
  double tau = 1.0;         // InfoNCE temperature
  double lambda_ret = 0.1;  // retrieval-loss weight
  std::uint64_t seed = 42;
  int threads = 1;

  void validate() const {
    if (tau <= 0) throw std::invalid_argument("pretrain: tau must be > 0");
    if (lambda_ret < 0) throw std::invalid_argument("pretrain: lambda_ret must be >= 0");
    if (patience < 1) throw std::invalid_argument("pretrain: patience must be >= 1");
    if (batch < 1 || max_epochs < 1) throw std::invalid_argument("pretrain: batch/epochs");
  }
};

// -log softmax(h . V^T)[target], on the tape (h: [1 x d] node).
template <typename T>
typename TapeT<T>::Id rec_loss_node(TapeT<T>& tape, BackboneT<T>& backbone,
                                    typename TapeT<T>::Id h, int target) {
  auto scores = tape.matmul_nt(h, tape.param(backbone.item_embeddings()));
  return tape.cross_entropy_mean(scores, {target});
}

template <typename T>
T rec_loss(BackboneT<T>& backbone, const TensorT<T>& h, int target) {
  TapeT<T> tape;
  return tape.value(rec_loss_node(tape, backbone, tape.constant(h), target))[0];
}

// Eq-style InfoNCE over explicit representation pairs.
template <typename T>
T ret_loss(const std::vector<std::pair<TensorT<T>, TensorT<T>>>& pairs, T tau) {
  if (pairs.empty()) throw std::invalid_argument("ret_loss: empty batch");
  std::size_t d = pairs[0].first.numel();
  TensorT<T> hp = TensorT<T>::zeros({pairs.size(), d});
  TensorT<T> hpp = TensorT<T>::zeros({pairs.size(), d});
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (std::size_t c = 0; c < d; ++c) {
      hp.at(i, c) = pairs[i].first[c];
      hpp.at(i, c) = pairs[i].second[c];
    }
  TapeT<T> tape;
  return tape.value(tape.infonce_mean(tape.constant(hp), tape.constant(hpp), tau))[0];
}

struct EpochLog {
  int epoch = 0;
  double rec_loss = 0;
  double ret_loss = 0;
  std::size_t ret_pairs = 0;
  bool ret_active = false;
  double val_hr10 = 0;
  double val_ndcg10 = 0;
  double seconds = 0;
};

inline std::string format_training_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch\trec_loss\tret_loss\tval_hr10\tval_ndcg10\tseconds\n";
  char buf[64];
  for (const auto& e : log) {
    out << e.epoch << '\t';
    std::snprintf(buf, sizeof(buf), "%.6f", e.rec_loss);
    out << buf << '\t';
    if (e.ret_active) {
      std::snprintf(buf, sizeof(buf), "%.6f", e.ret_loss);
      out << buf;
    } else {
      out << '-';
    }
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f", e.val_hr10, e.val_ndcg10);
    out << '\t' << buf << '\t';
    std::snprintf(buf, sizeof(buf), "%.3f", e.seconds);
    out << buf << '\n';
  }
  return out.str();
}

struct BatchLossStats {
  double rec = 0;
  double ret = 0;
  std::size_t pairs = 0;
};

// Builds the joint loss for one mini-batch of train-example indices. Each
// example is encoded once with its own dropout stream; that representation
// serves both the recommendation loss and the anchor side of its retrieval
// pair. Positive partners get an independent dropout stream. When
// lambda_ret == 0 the pairing machinery is never touched.
template <typename T>
typename TapeT<T>::Id batch_loss(TapeT<T>& tape, BackboneT<T>& backbone, const Split& split,
                                 const std::vector<TrainExample>& examples,
                                 const std::vector<int>& batch_idx, const TargetIndex& index,
                                 const PretrainConfig& cfg, int epoch, bool train_mode,
                                 BatchLossStats* stats = nullptr) {
  using Id = typename TapeT<T>::Id;
  std::vector<Id> reps;
  std::vector<int> targets;
  std::vector<Id> pair_anchor, pair_partner;

  for (int idx : batch_idx) {
    const TrainExample& ex = examples[static_cast<std::size_t>(idx)];
    auto anchor_rng = substream(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(idx), 0);
    Id h = backbone.encode(tape, split.prefix_of(ex), train_mode, &anchor_rng);
    reps.push_back(h);
    targets.push_back(ex.target);

    if (cfg.lambda_ret > 0) {
      auto pos_rng = substream(cfg.seed, "positive", static_cast<std::uint64_t>(epoch),
                               static_cast<std::uint64_t>(idx));
      int partner = sample_retrieval_positive(idx, examples, index, pos_rng);
      if (partner >= 0) {
        auto partner_rng = substream(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(idx), 1);
        Id hp = backbone.encode(tape, split.prefix_of(examples[static_cast<std::size_t>(partner)]),
                                train_mode, &partner_rng);
        pair_anchor.push_back(h);
        pair_partner.push_back(hp);
      }
    }
  }

  Id scores = tape.matmul_nt(tape.concat_rows(reps), tape.param(backbone.item_embeddings()));
  Id rec = tape.cross_entropy_mean(scores, targets);
  if (stats) {
    stats->rec = static_cast<double>(tape.value(rec)[0]);
    stats->pairs = pair_anchor.size();
  }
  if (cfg.lambda_ret > 0 && !pair_anchor.empty()) {
    Id ret = tape.infonce_mean(tape.concat_rows(pair_anchor), tape.concat_rows(pair_partner),
                               static_cast<T>(cfg.tau));
    if (stats) stats->ret = static_cast<double>(tape.value(ret)[0]);
    return tape.add_scaled(rec, ret, T(1), static_cast<T>(cfg.lambda_ret));
  }
  return rec;
}

template <typename T>
InferFn<T> backbone_scorer(BackboneT<T>& backbone) {
  return [&backbone](const std::vector<int>& prefix, int) {
    return backbone.score_items(backbone.encode_eval(prefix));
  };
}

struct PretrainResult {
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_hr10 = 0;
  bool diverged = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains in place and leaves the backbone at the best-validation parameters.
// `on_epoch` fires after each epoch's validation, with the current (not yet
// restored) parameters still in the backbone.
template <typename T>
PretrainResult pretrain(BackboneT<T>& backbone, const Split& split, const PretrainConfig& cfg,
                        const EpochCallback& on_epoch = {}) {
  cfg.validate();
  auto examples = split.train_examples();
  if (examples.empty()) throw std::invalid_argument("pretrain: empty train split");
  TargetIndex index = cfg.lambda_ret > 0 ? build_target_index(examples) : TargetIndex{};

  auto params = backbone.params();
  AdamT<T> adam(params, static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1),
                static_cast<T>(cfg.beta2), static_cast<T>(cfg.adam_eps));

  PretrainResult result;
  std::vector<TensorT<T>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (auto* p : params) best_values.push_back(p->value);
  };
  auto restore = [&] {
    if (best_values.empty()) return;
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  };
  snapshot();  // initial weights are the fallback if epoch 1 diverges

  std::vector<int> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto shuffle_rng = substream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_inplace(order, shuffle_rng);

    double rec_sum = 0, ret_sum = 0;
    std::size_t rec_n = 0, ret_n = 0;
    bool finite = true;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::vector<int> batch_idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      TapeT<T> tape;
      BatchLossStats stats;
      auto loss = batch_loss(tape, backbone, split, examples, batch_idx, index, cfg, epoch,
                             /*train_mode=*/true, &stats);
      if (!std::isfinite(static_cast<double>(tape.value(loss)[0]))) {
        finite = false;
        break;
      }
      zero_grads(params);
      tape.backward(loss);
      adam.step();
      rec_sum += stats.rec * static_cast<double>(batch_idx.size());
      rec_n += batch_idx.size();
      ret_sum += stats.ret * static_cast<double>(stats.pairs);
      ret_n += stats.pairs;
    }
    if (!finite) {
      result.diverged = true;
      restore();
      break;
    }

    auto val =
        compute_ranks<T>(backbone_scorer(backbone), split.valid, EvalOptions{0, 0, 0, cfg.threads});
    EpochLog entry;
    entry.epoch = epoch;
    entry.rec_loss = rec_n ? rec_sum / static_cast<double>(rec_n) : 0;
    entry.ret_loss = ret_n ? ret_sum / static_cast<double>(ret_n) : 0;
    entry.ret_pairs = ret_n;
    entry.ret_active = cfg.lambda_ret > 0;
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
