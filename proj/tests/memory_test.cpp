#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "replaylab/memory/fifo_buffer.hpp"
#include "replaylab/memory/ranked_store.hpp"
#include "replaylab/memory/sampler.hpp"
#include "replaylab/memory/selection.hpp"
#include "replaylab/memory/snapshot.hpp"
#include "replaylab/memory/surprise.hpp"
#include "support/two_clusters.hpp"

using namespace replaylab;

namespace {

Experience tagged(std::uint64_t step, TaskId task = 0) {
  Experience e;
  e.state = {static_cast<double>(step)};
  e.next_state = {static_cast<double>(step)};
  e.step_index = step;
  e.task_id = task;
  return e;
}

Experience at(double x) {
  Experience e;
  e.state = {x};
  e.next_state = {x};
  return e;
}

Vector first_coord(const TransitionView& e) { return {e.state[0]}; }

std::set<std::uint64_t> stored_steps(const RankedStore& s) {
  std::set<std::uint64_t> out;
  for (const auto& entry : s.entries()) out.insert(entry.experience.step_index);
  return out;
}

// Offline top-K: sort by rank descending, earlier index first on ties.
std::set<std::uint64_t> top_k(const std::vector<double>& ranks, std::size_t k) {
  std::vector<std::size_t> idx(ranks.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ranks[a] > ranks[b]; });
  idx.resize(std::min(k, idx.size()));
  return {idx.begin(), idx.end()};
}

double binomial_sigma(double p, double n) { return std::sqrt(p * (1.0 - p) / n); }

}  // namespace

TEST(FifoBuffer, EvictsOldest) {
  FifoBuffer b(2);
  EXPECT_FALSE(b.insert(tagged(1)));
  EXPECT_FALSE(b.insert(tagged(2)));
  const auto ev = b.insert(tagged(3));
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->step_index, 1u);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].step_index, 2u);
  EXPECT_EQ(b[1].step_index, 3u);
}

TEST(FifoBuffer, SingleSlot) {
  FifoBuffer b(1);
  EXPECT_FALSE(b.insert(tagged(1)));
  EXPECT_EQ(b.size(), 1u);
  EXPECT_THROW(FifoBuffer(0), Error);
}

TEST(FifoBuffer, EvictionOrderEqualsInsertionOrder) {
  FifoBuffer b(7);
  std::vector<std::uint64_t> evicted;
  for (std::uint64_t i = 0; i < 100; ++i)
    if (auto e = b.insert(tagged(i))) evicted.push_back(e->step_index);
  ASSERT_EQ(evicted.size(), 93u);
  for (std::size_t i = 0; i < evicted.size(); ++i) EXPECT_EQ(evicted[i], i);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b[i].step_index, 93 + i);
  EXPECT_LE(b.size(), b.capacity());
}

TEST(RankedStore, HandSimulation) {
  RankedStore s(2);
  EXPECT_FALSE(s.insert(tagged(0), 0.1));  // a
  EXPECT_FALSE(s.insert(tagged(1), 0.5));  // b
  EXPECT_EQ(stored_steps(s), (std::set<std::uint64_t>{0, 1}));
  auto ev = s.insert(tagged(2), 0.3);  // c evicts a
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->step_index, 0u);
  EXPECT_EQ(stored_steps(s), (std::set<std::uint64_t>{1, 2}));
  ev = s.insert(tagged(3), 0.05);  // d is discarded
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->step_index, 3u);
  EXPECT_EQ(stored_steps(s), (std::set<std::uint64_t>{1, 2}));
  EXPECT_DOUBLE_EQ(s.min_rank(), 0.3);
}

TEST(RankedStore, TiesKeepTheEarlierEntry) {
  RankedStore s(2);
  s.insert(tagged(0), 1.0);
  s.insert(tagged(1), 1.0);
  const auto ev = s.insert(tagged(2), 1.0);
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->step_index, 2u);
  EXPECT_EQ(s[s.min_slot()].experience.step_index, 1u);
}

TEST(RankedStore, RejectsNonFiniteRanks) {
  RankedStore s(2);
  EXPECT_THROW(s.insert(tagged(0), std::nan("")), Error);
  EXPECT_THROW(s.insert(tagged(0), INFINITY), Error);
  EXPECT_THROW(RankedStore(0), Error);
}

TEST(RankedStore, MatchesOfflineTopK) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> len(1, 200), cap(1, 20), coarse(0, 9);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution use_ties(0.5);
  for (int stream = 0; stream < 1000; ++stream) {
    const std::size_t n = len(rng), k = cap(rng);
    const bool ties = use_ties(rng);
    std::vector<double> ranks(n);
    for (double& r : ranks) r = ties ? static_cast<double>(coarse(rng)) : normal(rng);
    RankedStore s(k);
    for (std::size_t i = 0; i < n; ++i) s.insert(tagged(i), ranks[i]);
    ASSERT_EQ(stored_steps(s), top_k(ranks, k)) << "stream " << stream;
    ASSERT_LE(s.size(), k);
    const auto worst = std::min_element(s.entries().begin(), s.entries().end(),
                                        [](const auto& a, const auto& b) { return a.rank < b.rank; });
    EXPECT_EQ(worst->rank, s.min_rank());
  }
}

TEST(RankedStore, RerankKeepsSlotsStable) {
  RankedStore s(3);
  s.insert(tagged(0), 1.0);
  s.insert(tagged(1), 2.0);
  s.insert(tagged(2), 3.0);
  EXPECT_EQ(s[s.min_slot()].experience.step_index, 0u);
  s.rerank(0, 10.0);
  EXPECT_EQ(s[0].experience.step_index, 0u);
  EXPECT_EQ(s[s.min_slot()].experience.step_index, 1u);
  EXPECT_EQ(s.slots_by_preference(), (std::vector<std::size_t>{0, 2, 1}));
}

TEST(RankReward, AbsoluteReturnPlusSmallJitter) {
  std::mt19937_64 rng(1);
  Experience e;
  for (double ret : {1.0, -1.0, 0.0}) {
    e.ret = ret;
    for (int i = 0; i < 100; ++i) {
      const double r = rank_reward(view_of(e), rng);
      EXPECT_GE(r, std::abs(ret));
      EXPECT_LE(r, std::abs(ret) + 1e-6);
    }
  }
}

TEST(RankReservoir, DeterministicAndCentred) {
  std::mt19937_64 a(9), b(9);
  const double a1 = rank_reservoir(a), a2 = rank_reservoir(a);
  EXPECT_NE(a1, a2);
  EXPECT_EQ(a1, rank_reservoir(b));
  std::mt19937_64 rng(10);
  double sum = 0.0;
  for (int i = 0; i < 1'000'000; ++i) sum += rank_reservoir(rng);
  EXPECT_NEAR(sum / 1e6, 0.0, 0.005);
}

TEST(RankReservoir, FirstExperienceRetainedWithProbabilityKOverT) {
  const std::size_t k = 10, t = 50, trials = 100'000;
  std::size_t kept = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    SelectionStrategy s;
    s.rng_seed = trial;
    EpisodicMemory m(k, s);
    for (std::size_t i = 0; i < t; ++i) m.offer(tagged(i));
    kept += stored_steps(m.store()).count(0);
  }
  const double p = double(k) / double(t);
  EXPECT_NEAR(double(kept) / trials, p, 3.0 * binomial_sigma(p, trials));
}

TEST(RankReservoir, RetentionDoesNotDependOnArrivalOrder) {
  const std::size_t k = 8, t = 40, trials = 20'000;
  std::vector<std::size_t> order(t);
  for (std::size_t i = 0; i < t; ++i) order[i] = i;
  std::vector<std::size_t> shuffled = order;
  std::mt19937_64 perm(3);
  std::shuffle(shuffled.begin(), shuffled.end(), perm);
  const auto frequencies = [&](const std::vector<std::size_t>& arrival, std::uint64_t base) {
    std::vector<double> f(t, 0.0);
    for (std::size_t trial = 0; trial < trials; ++trial) {
      SelectionStrategy s;
      s.rng_seed = base + trial;
      EpisodicMemory m(k, s);
      for (const std::size_t id : arrival) m.offer(tagged(id));
      for (const auto id : stored_steps(m.store())) f[id] += 1.0 / trials;
    }
    return f;
  };
  const auto fa = frequencies(order, 0), fb = frequencies(shuffled, 1'000'000);
  const double p = double(k) / double(t);
  const double sigma_diff = std::sqrt(2.0) * binomial_sigma(p, trials);
  for (std::size_t id = 0; id < t; ++id) EXPECT_LT(std::abs(fa[id] - fb[id]), 4.5 * sigma_diff) << "id " << id;
}

TEST(Coverage, EmptyStoreKeepsFirstPointWithRankZero) {
  RankedStore s(4);
  EXPECT_FALSE(coverage_insert(s, at(0.0), {0.0}, Metric::L1, 1.0));
  EXPECT_EQ(s.min_rank(), 0.0);
}

TEST(Coverage, DistantPointDisplacesTheCluster) {
  RankedStore s(3);
  for (int i = 0; i < 3; ++i) coverage_insert(s, tagged(i), {0.0}, Metric::L1, 1.0);
  const auto ev = coverage_insert(s, tagged(3), {100.0}, Metric::L1, 1.0);
  ASSERT_TRUE(ev);
  EXPECT_NE(ev->step_index, 3u);
  EXPECT_TRUE(stored_steps(s).count(3));
}

TEST(Coverage, NeighborCountsOnALine) {
  RankedStore s(3);
  for (double x : {0.0, 1.0, 2.0}) s.insert(at(x), 0.0, {x});
  // Brute-force oracle over all pairs.
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t oracle = 0;
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j && std::abs(s[i].feature[0] - s[j].feature[0]) < 1.5) ++oracle;
    EXPECT_EQ(neighbor_count(s, s[i].feature, Metric::L1, 1.5, i), oracle);
  }
  EXPECT_EQ(neighbor_count(s, s[0].feature, Metric::L1, 1.5, 0), 1u);
  EXPECT_EQ(neighbor_count(s, s[1].feature, Metric::L1, 1.5, 1), 2u);
  EXPECT_EQ(neighbor_count(s, s[2].feature, Metric::L1, 1.5, 2), 1u);
}

TEST(Coverage, RefreshUsesCurrentContents) {
  SelectionStrategy st;
  st.kind = StrategyKind::Coverage;
  st.coverage.distance = 0.5;
  EpisodicMemory m(3, st, first_coord);
  m.offer(at(0.0));  // rank 0
  m.offer(at(0.1));  // rank -1
  m.offer(at(0.2));  // rank -2, the densest
  const auto ev = m.offer(at(50.0));
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->state[0], 0.2);
  ASSERT_EQ(m.store()[2].experience.state[0], 50.0);
  const std::vector<std::size_t> sampled{0, 2};
  m.refresh_on_sample(sampled);
  EXPECT_EQ(m.store()[0].rank, -1.0);  // 0.1 arrived after it
  EXPECT_EQ(m.store()[1].rank, -1.0);  // not sampled
  EXPECT_EQ(m.store()[2].rank, 0.0);
}

TEST(Coverage, RefreshRecountsAfterEviction) {
  RankedStore s(3);
  s.insert(at(0.0), -2.0, {0.0});
  s.insert(at(0.1), -2.0, {0.1});
  s.insert(at(9.0), 0.0, {9.0});
  // Replace the point at 0.1 by a far one through the store's own rule.
  s.rerank(1, -3.0);
  s.insert(at(20.0), 0.0, {20.0});
  const std::vector<std::size_t> slots{0};
  const double before = s[0].rank;
  refresh_coverage(s, slots, Metric::L1, 0.5);
  EXPECT_GT(s[0].rank, before);
  EXPECT_EQ(s[0].rank, 0.0);
}

TEST(Coverage, AutoRadiusIsTheMedianPairwiseDistance) {
  SelectionStrategy st;
  st.kind = StrategyKind::Coverage;
  st.coverage.calibration_size = 4;
  EpisodicMemory m(10, st, first_coord);
  for (double x : {0.0, 1.0, 3.0}) m.offer(at(x));
  EXPECT_FALSE(m.coverage_distance());
  m.offer(at(7.0));
  // Pairwise: 1 3 7 2 6 4 -> median of {1,2,3,4,6,7} = 3.5.
  ASSERT_TRUE(m.coverage_distance());
  EXPECT_DOUBLE_EQ(*m.coverage_distance(), 3.5);
  EXPECT_DOUBLE_EQ(median_pairwise_distance(std::vector<Vector>{{0.0}, {1.0}, {3.0}}, Metric::L1), 2.0);
}

TEST(Coverage, CalibrationWindowShrinksToCapacity) {
  SelectionStrategy st;
  st.kind = StrategyKind::Coverage;
  EpisodicMemory m(3, st, first_coord);
  for (double x : {0.0, 2.0, 4.0}) m.offer(at(x));
  ASSERT_TRUE(m.coverage_distance());
  EXPECT_DOUBLE_EQ(*m.coverage_distance(), 2.0);
  EXPECT_THROW(EpisodicMemory(3, st), Error);
}

TEST(Coverage, BeatsReservoirOnAMinorityCluster) {
  std::size_t wins = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto stream = fixtures::two_cluster_stream(seed);
    SelectionStrategy cov;
    cov.kind = StrategyKind::Coverage;
    cov.coverage.metric = Metric::L2;
    const std::size_t coverage_b = fixtures::retained_minority(stream, cov, 50);
    double reservoir_b = 0.0;
    for (std::uint64_t r = 0; r < 100; ++r) {
      SelectionStrategy res;
      res.rng_seed = seed * 1000 + r;
      reservoir_b += fixtures::retained_minority(stream, res, 50) / 100.0;
    }
    wins += double(coverage_b) > reservoir_b ? 1 : 0;
  }
  EXPECT_GE(wins, 95u);
}

TEST(Strategies, NeverRefreshOutsideCoverage) {
  for (StrategyKind kind : {StrategyKind::Reservoir, StrategyKind::Reward, StrategyKind::Surprise}) {
    SelectionStrategy st;
    st.kind = kind;
    EpisodicMemory m(5, st);
    for (int i = 0; i < 8; ++i) {
      Experience e = tagged(i);
      e.ret = i * 0.1;
      m.offer(e, kind == StrategyKind::Surprise ? std::optional<double>(0.37 * i) : std::nullopt);
    }
    std::vector<double> before;
    for (const auto& e : m.store().entries()) before.push_back(e.rank);
    const std::vector<std::size_t> slots{0, 1, 2, 3, 4, 0};
    m.refresh_on_sample(slots);
    std::vector<double> after;
    for (const auto& e : m.store().entries()) after.push_back(e.rank);
    EXPECT_EQ(before, after) << to_string(kind);
  }
}

TEST(Strategies, SurpriseNeedsAnExternalRank) {
  SelectionStrategy st;
  st.kind = StrategyKind::Surprise;
  EpisodicMemory m(2, st);
  EXPECT_THROW(m.offer(tagged(0)), Error);
}

TEST(Surprise, RankIsReturnError) {
  nn::QNetwork net({1, 1, 2}, {nn::LayerSpec::output(2)});
  Experience e;
  e.state = {0.3, -0.7};
  e.next_state = e.state;
  e.action = 1;
  e.ret = 1.0;
  EXPECT_DOUBLE_EQ(rank_surprise(view_of(e), net), 1.0);
  // Output bias 0.25 on every action: Q(s,a) = 0.25.
  net.parameters().tail(2).setConstant(0.25);
  e.ret = -1.0;
  EXPECT_DOUBLE_EQ(rank_surprise(view_of(e), net), 1.25);
  e.ret = 0.25;
  EXPECT_DOUBLE_EQ(rank_surprise(view_of(e), net), 0.0);
  e.state = {1.0};
  EXPECT_THROW(rank_surprise(view_of(e), net), Error);
}

TEST(Surprise, OneStepTarget) {
  nn::QNetwork net({1, 1, 1}, {nn::LayerSpec::output(2)});
  net.parameters().tail(2) << 0.5, 2.0;
  Experience e;
  e.state = e.next_state = {0.0};
  e.action = 0;
  e.reward = 1.0;
  // |1 + 0.9 * 2.0 - 0.5|
  EXPECT_DOUBLE_EQ(rank_surprise(view_of(e), net, SurpriseTarget::OneStep, 0.9), 2.3);
  e.terminal = true;
  EXPECT_DOUBLE_EQ(rank_surprise(view_of(e), net, SurpriseTarget::OneStep, 0.9), 0.5);
}

TEST(SampleBatch, SplitsAsRequested) {
  FifoBuffer fifo(100);
  for (int i = 0; i < 50; ++i) fifo.insert(tagged(i, 0));
  SelectionStrategy st;
  EpisodicMemory epi(900, st);
  for (int i = 0; i < 50; ++i) epi.offer(tagged(1000 + i, 1));
  std::mt19937_64 rng(4);
  const auto b = sample_batch(fifo, &epi, BatchSpec{60, 30, 30}, rng);
  ASSERT_EQ(b.experiences.size(), 60u);
  EXPECT_EQ(b.from_fifo, 30u);
  EXPECT_EQ(b.from_episodic, 30u);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(b.experiences[i]->task_id, i < 30 ? 0u : 1u);
}

TEST(SampleBatch, EmptySideHandsOverItsShare) {
  FifoBuffer fifo(100);
  fifo.insert(tagged(7));
  SelectionStrategy st;
  EpisodicMemory epi(10, st);
  std::mt19937_64 rng(4);
  auto b = sample_batch(fifo, &epi, BatchSpec{60, 30, 30}, rng);
  EXPECT_EQ(b.from_fifo, 60u);
  EXPECT_EQ(b.experiences.size(), 60u);
  for (const auto* e : b.experiences) EXPECT_EQ(e->step_index, 7u);
  b = sample_batch(fifo, nullptr, BatchSpec{30, 30, 0}, rng);
  EXPECT_EQ(b.experiences.size(), 30u);

  FifoBuffer empty_fifo(5);
  epi.offer(tagged(3));
  b = sample_batch(empty_fifo, &epi, BatchSpec{60, 30, 30}, rng);
  EXPECT_EQ(b.from_episodic, 60u);
}

TEST(SampleBatch, Errors) {
  FifoBuffer fifo(5);
  std::mt19937_64 rng(0);
  try {
    sample_batch(fifo, nullptr, BatchSpec{}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no experiences");
  }
  fifo.insert(tagged(0));
  EXPECT_THROW(sample_batch(fifo, nullptr, BatchSpec{60, 30, 20}, rng), Error);
  EXPECT_THROW(sample_batch(fifo, nullptr, BatchSpec{0, 0, 0}, rng), Error);
}

TEST(SampleBatch, MutatesOnlyCoverageRanks) {
  for (StrategyKind kind : {StrategyKind::Reservoir, StrategyKind::Reward, StrategyKind::Coverage}) {
    FifoBuffer fifo(20);
    SelectionStrategy st;
    st.kind = kind;
    st.coverage.distance = 1.5;
    EpisodicMemory epi(10, st, first_coord);
    for (int i = 0; i < 30; ++i) {
      fifo.insert(tagged(i));
      epi.offer(at(i % 7));
    }
    std::vector<Experience> fifo_before(fifo.begin(), fifo.end());
    std::vector<double> ranks_before;
    for (const auto& e : epi.store().entries()) ranks_before.push_back(e.rank);
    std::mt19937_64 rng(5);
    SampledBatch last;
    for (int k = 0; k < 20; ++k) last = sample_batch(fifo, &epi, BatchSpec{}, rng);
    EXPECT_EQ(std::vector<Experience>(fifo.begin(), fifo.end()), fifo_before);
    std::vector<double> ranks_after;
    for (const auto& e : epi.store().entries()) ranks_after.push_back(e.rank);
    if (kind == StrategyKind::Coverage) {
      for (const std::size_t slot : last.episodic_slots) {
        const auto& f = epi.store()[slot].feature;
        EXPECT_EQ(ranks_after[slot], -static_cast<double>(neighbor_count(epi.store(), f, Metric::L1, 1.5, slot)));
      }
      EXPECT_NE(ranks_after, ranks_before);
    } else {
      EXPECT_EQ(ranks_after, ranks_before) << to_string(kind);
    }
  }
}

TEST(Composition, CountsPerTask) {
  SelectionStrategy st;
  EpisodicMemory empty(4, st);
  EXPECT_TRUE(composition_report(empty.store()).empty());
  RankedStore s(10);
  for (int i = 0; i < 3; ++i) s.insert(tagged(i, 0), i);
  for (int i = 0; i < 2; ++i) s.insert(tagged(10 + i, 1), i);
  EXPECT_EQ(composition_report(s), (std::map<TaskId, std::size_t>{{0, 3}, {1, 2}}));
}

TEST(Snapshot, RoundTripIsLossless) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1e3);
  SelectionStrategy st;
  EpisodicMemory m(20, st);
  for (int i = 0; i < 40; ++i) {
    Experience e = tagged(i, i % 3);
    e.state = {g(rng), g(rng) * 1e-9, 1.0 / 3.0};
    e.next_state = {g(rng), -0.0, 1e-300};
    e.reward = g(rng);
    e.ret = g(rng);
    e.action = i % 4;
    e.terminal = i % 5 == 0;
    m.offer(e);
  }
  const BufferSnapshot snap = snapshot_of(m);
  std::stringstream ss;
  write_snapshot(snap, ss);
  const BufferSnapshot back = read_snapshot(ss);
  EXPECT_EQ(back, snap);
  EXPECT_EQ(composition_report(back), composition_report(m.store()));

  FifoBuffer fifo(3);
  for (int i = 0; i < 5; ++i) fifo.insert(tagged(i));
  std::stringstream fs;
  write_snapshot(snapshot_of(fifo), fs);
  const auto fb = read_snapshot(fs);
  EXPECT_EQ(fb.kind, "fifo");
  ASSERT_EQ(fb.records.size(), 3u);
  EXPECT_FALSE(fb.records[0].rank);
  EXPECT_EQ(fb.records[0].experience.step_index, 2u);
}

TEST(Snapshot, RejectsForeignDocuments) {
  std::stringstream ss("{\"format\":\"something\"}");
  EXPECT_THROW(read_snapshot(ss), Error);
  std::stringstream bad("not json");
  EXPECT_THROW(read_snapshot(bad), Error);
}
