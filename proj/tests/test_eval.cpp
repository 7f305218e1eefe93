#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "raserec/ablation.hpp"
#include "raserec/evaluate.hpp"
#include "raserec/rng.hpp"

using namespace raserec;

namespace {

std::vector<RankResult> ranks_of(std::initializer_list<int> ranks) {
  std::vector<RankResult> out;
  int user = 0;
  for (int r : ranks) out.push_back({user++, 0, r, 1});
  return out;
}

}  // namespace

TEST(Metrics, HrCountsHitsWithinCutoff) {
  EXPECT_EQ(hr_at_n(ranks_of({1, 1, 1}), 5), 1.0);
  EXPECT_DOUBLE_EQ(hr_at_n(ranks_of({1, 7, 20}), 5), 1.0 / 3.0);
  EXPECT_THROW(hr_at_n({}, 5), std::invalid_argument);
}

TEST(Metrics, NdcgUsesLogDiscount) {
  EXPECT_DOUBLE_EQ(ndcg_at_n(ranks_of({1}), 5), 1.0);        // log2(2) = 1
  EXPECT_DOUBLE_EQ(ndcg_at_n(ranks_of({3}), 5), 0.5);        // 1/log2(4)
  EXPECT_DOUBLE_EQ(ndcg_at_n(ranks_of({1, 3, 10}), 5), 0.5); // (1 + 0.5 + 0)/3
  EXPECT_THROW(ndcg_at_n({}, 5), std::invalid_argument);
}

TEST(Metrics, NdcgNeverExceedsHrAndBothGrowWithN) {
  auto g = substream(1, "test-data");
  std::vector<RankResult> results;
  for (int i = 0; i < 200; ++i)
    results.push_back({i, 0, 1 + static_cast<int>(uniform_below(g, 40)), 1});
  double prev_hr = 0, prev_ndcg = 0;
  for (int n : {1, 2, 5, 10, 20, 40}) {
    double hr = hr_at_n(results, n), ndcg = ndcg_at_n(results, n);
    EXPECT_LE(ndcg, hr + 1e-12);
    EXPECT_GE(hr, prev_hr);
    EXPECT_GE(ndcg, prev_ndcg);
    prev_hr = hr;
    prev_ndcg = ndcg;
  }
}

TEST(Ranking, TieGoesToLowerItemId) {
  std::vector<double> scores = {0.5, 0.9, 0.5, 0.5, 0.1};
  EXPECT_EQ(rank_of_target(scores, 1), 1);
  EXPECT_EQ(rank_of_target(scores, 0), 2);  // ties with 2,3 but lowest id
  EXPECT_EQ(rank_of_target(scores, 2), 3);
  EXPECT_EQ(rank_of_target(scores, 3), 4);
  EXPECT_EQ(rank_of_target(scores, 4), 5);
}

TEST(Evaluate, OracleScorerIsPerfect) {
  std::vector<HeldOut> cases;
  for (int u = 0; u < 10; ++u) cases.push_back({u, {1, 2}, u % 5});
  InferFn<double> oracle = [](const std::vector<int>&, int user) {
    std::vector<double> scores(5, 0.0);
    scores[static_cast<std::size_t>(user % 5)] = 1.0;
    return scores;
  };
  auto ranks = compute_ranks<double>(oracle, cases, {});
  EXPECT_EQ(hr_at_n(ranks, 5), 1.0);
  EXPECT_EQ(ndcg_at_n(ranks, 5), 1.0);
}

TEST(Evaluate, ConstantScorerFollowsTieRuleArithmetic) {
  // All scores equal: the target's rank is target_id + 1, so HR@N counts the
  // targets with id < N.
  const int vocab = 20;
  std::vector<HeldOut> cases;
  for (int u = 0; u < vocab; ++u) cases.push_back({u, {0}, u});
  InferFn<double> constant = [](const std::vector<int>&, int) {
    return std::vector<double>(vocab, 0.25);
  };
  auto ranks = compute_ranks<double>(constant, cases, {});
  for (int n : {1, 5, 10, 20})
    EXPECT_DOUBLE_EQ(hr_at_n(ranks, n), static_cast<double>(n) / vocab);
}

TEST(Evaluate, RepeatedEvaluationIsPure) {
  std::vector<HeldOut> cases;
  for (int u = 0; u < 25; ++u) cases.push_back({u, {u % 3, u % 5}, (u * 7) % 11});
  InferFn<double> scorer = [](const std::vector<int>& prefix, int user) {
    std::vector<double> s(11);
    for (std::size_t i = 0; i < s.size(); ++i)
      s[i] = std::sin(static_cast<double>(i * (user + 1) + prefix.size()));
    return s;
  };
  Split split;
  split.num_items = 11;
  split.train_items = {{1, 2, 3}};
  split.train_times = {{1, 2, 3}};
  auto a = evaluate<double>(scorer, split, cases, {5, 10}, {}, 5, 4);
  auto b = evaluate<double>(scorer, split, cases, {5, 10}, {}, 5, 4);
  EXPECT_EQ(a.table(), b.table());
}

TEST(Evaluate, ThreadCountDoesNotChangeTheReport) {
  std::vector<HeldOut> cases;
  for (int u = 0; u < 40; ++u) cases.push_back({u, {u % 4}, (u * 3) % 9});
  InferFn<double> scorer = [](const std::vector<int>&, int user) {
    std::vector<double> s(9);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::cos(static_cast<double>(i) * user);
    return s;
  };
  EvalOptions seq;
  seq.threads = 1;
  EvalOptions par;
  par.threads = 4;
  auto a = compute_ranks<double>(scorer, cases, seq);
  auto b = compute_ranks<double>(scorer, cases, par);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rank, b[i].rank);
}

TEST(Groups, EqualSizesWithinOne) {
  std::vector<std::int64_t> keys, ties;
  for (int i = 0; i < 103; ++i) {
    keys.push_back(i % 17);
    ties.push_back(i);
  }
  auto labels = equal_size_groups(keys, ties, 10);
  std::vector<int> sizes(10, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  for (int s : sizes) EXPECT_TRUE(s == 10 || s == 11);
}

TEST(Groups, PopularityMeansAreNonDecreasing) {
  Split split;
  split.num_items = 30;
  split.train_items.resize(1);
  auto g = substream(3, "test-data");
  // skewed popularity counts
  for (int item = 0; item < 30; ++item)
    for (std::uint64_t c = 0; c < 1 + (uniform_below(g, 20)); ++c)
      split.train_items[0].push_back(item);
  std::vector<HeldOut> cases;
  for (int u = 0; u < 100; ++u)
    cases.push_back({u, {0}, static_cast<int>(uniform_below(g, 30))});
  auto pop = train_popularity(split);
  auto labels = group_by_item_popularity(split, cases, 10);

  std::vector<double> mean(10, 0);
  std::vector<int> count(10, 0);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    mean[static_cast<std::size_t>(labels[i])] +=
        static_cast<double>(pop[static_cast<std::size_t>(cases[i].target)]);
    ++count[static_cast<std::size_t>(labels[i])];
  }
  double prev = -1;
  for (int grp = 0; grp < 10; ++grp) {
    ASSERT_GT(count[static_cast<std::size_t>(grp)], 0);
    double m = mean[static_cast<std::size_t>(grp)] / count[static_cast<std::size_t>(grp)];
    EXPECT_GE(m, prev - 1e-9) << "group " << grp;
    prev = m;
  }
}

TEST(Groups, DegenerateEqualPopularityFallsBackToItemIdOrder) {
  Split split;
  split.num_items = 10;
  split.train_items = {{}};  // all popularity 0
  std::vector<HeldOut> cases;
  for (int u = 0; u < 10; ++u) cases.push_back({u, {0}, 9 - u});
  auto labels = group_by_item_popularity(split, cases, 5);
  // sorted by item id: targets 9-u => user 9 (item 0) lands in group 0
  EXPECT_EQ(labels[9], 0);
  EXPECT_EQ(labels[0], 4);
  auto labels2 = group_by_item_popularity(split, cases, 5);
  EXPECT_EQ(labels, labels2);
}

TEST(Groups, FrequencyGroupsTrackPrefixLength) {
  std::vector<HeldOut> cases;
  for (int u = 0; u < 64; ++u)
    cases.push_back({u, std::vector<int>(static_cast<std::size_t>(1 + u % 16), 0), 0});
  auto labels = group_by_user_frequency(cases, 8);
  std::vector<int> sizes(8, 0);
  std::vector<double> len_mean(8, 0);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    ++sizes[static_cast<std::size_t>(labels[i])];
    len_mean[static_cast<std::size_t>(labels[i])] += static_cast<double>(cases[i].prefix.size());
  }
  double prev = 0;
  for (int grp = 0; grp < 8; ++grp) {
    EXPECT_EQ(sizes[static_cast<std::size_t>(grp)], 8);
    double m = len_mean[static_cast<std::size_t>(grp)] / 8.0;
    EXPECT_GE(m, prev);
    prev = m;
  }
}

TEST(Evaluate, GroupedReportCoversEveryCase) {
  std::vector<HeldOut> cases;
  for (int u = 0; u < 30; ++u)
    cases.push_back({u, std::vector<int>(static_cast<std::size_t>(1 + u % 4), 1), u % 7});
  InferFn<double> scorer = [](const std::vector<int>&, int) {
    return std::vector<double>{7, 6, 5, 4, 3, 2, 1};
  };
  Split split;
  split.num_items = 7;
  split.train_items = {{0, 0, 1, 2}};
  split.train_times = {{1, 2, 3, 4}};
  auto report = evaluate<double>(scorer, split, cases, {5, 10}, {}, 5, 3);
  EXPECT_EQ(report.num_cases, 30u);
  std::size_t pop_total = 0, freq_total = 0;
  for (const auto& grp : report.groups) {
    if (grp.name.rfind("pop", 0) == 0) pop_total += grp.size;
    if (grp.name.rfind("freq", 0) == 0) freq_total += grp.size;
  }
  EXPECT_EQ(pop_total, 30u);
  EXPECT_EQ(freq_total, 30u);
}

TEST(Evaluate, NoiseZeroMatchesPlainAndIsSeedStable) {
  std::vector<HeldOut> cases;
  for (int u = 0; u < 12; ++u) cases.push_back({u, {u % 5, (u + 1) % 5}, u % 5});
  InferFn<double> scorer = [](const std::vector<int>& prefix, int) {
    std::vector<double> s(5, 0);
    s[prefix.size() % 5] = 1.0;
    return s;
  };
  EvalOptions plain;
  EvalOptions zero_noise;
  zero_noise.noise_ratio = 0.0;
  zero_noise.num_items = 5;
  auto a = compute_ranks<double>(scorer, cases, plain);
  auto b = compute_ranks<double>(scorer, cases, zero_noise);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].rank, b[i].rank);

  EvalOptions noisy;
  noisy.noise_ratio = 0.5;
  noisy.num_items = 5000;
  noisy.seed = 11;
  auto c = compute_ranks<double>(scorer, cases, noisy);
  auto d = compute_ranks<double>(scorer, cases, noisy);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(c[i].rank, d[i].rank);
}

TEST(Sweep, AggregateComputesMeanAndStd) {
  std::vector<std::vector<MetricsAtN>> per_seed = {
      {{5, 0.2, 0.1}}, {{5, 0.4, 0.3}}, {{5, 0.6, 0.5}}};
  auto cell = aggregate_cell("alpha", 0.5, per_seed);
  ASSERT_EQ(cell.mean.size(), 1u);
  EXPECT_NEAR(cell.mean[0].hr, 0.4, 1e-12);
  EXPECT_NEAR(cell.mean[0].ndcg, 0.3, 1e-12);
  double expect_std = std::sqrt((0.04 + 0.0 + 0.04) / 3.0);
  EXPECT_NEAR(cell.stddev[0].hr, expect_std, 1e-12);
  EXPECT_EQ(cell.seeds, 3u);
}

TEST(Sweep, RunsAllThreeOneDimensionalGrids) {
  int calls = 0;
  SweepCellFn fn = [&](double alpha, double beta, int k, std::uint64_t seed) {
    ++calls;
    return std::vector<MetricsAtN>{{5, alpha * 0.1 + beta * 0.01 + k * 0.001 + seed * 0.0001, 0}};
  };
  FusionConfig base;
  base.alpha = 0.5;
  base.beta = 0.9;
  base.topk = 20;
  auto table = run_sweep_ablation(fn, base, {1, 2}, default_coefficient_grid(),
                                  default_coefficient_grid(), default_topk_grid());
  // 11 alphas + 11 betas + 11 Ks, two seeds each
  EXPECT_EQ(calls, (11 + 11 + 11) * 2);
  EXPECT_EQ(table.cells.size(), 33u);
  EXPECT_NE(table.table().find("alpha"), std::string::npos);
  EXPECT_NE(table.table().find("K"), std::string::npos);
}
