#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "clucdd/assignment.hpp"
#include "clucdd/metrics.hpp"
#include "support/oracles.hpp"

using namespace clucdd;
using L = std::vector<int>;

TEST(Nmi, IdenticalLabelingsScoreOne) {
  EXPECT_DOUBLE_EQ(nmi(L{0, 1, 1, 2}, L{0, 1, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(nmi(L{0, 0, 0}, L{0, 0, 0}), 1.0);
}

TEST(Nmi, OneSidedZeroEntropyIsZero) { EXPECT_DOUBLE_EQ(nmi(L{0, 0, 1, 1}, L{0, 0, 0, 0}), 0.0); }

TEST(Nmi, SplitSessionExample) {
  // H(gold) = 1 bit, H(pred) = 1.5 bits, MI = 1 bit.
  EXPECT_NEAR(nmi(L{0, 0, 1, 1}, L{0, 0, 1, 2}), 0.8, 1e-12);
}

TEST(Ari, PermutationInvariant) { EXPECT_DOUBLE_EQ(ari(L{0, 0, 1, 1}, L{1, 1, 0, 0}), 1.0); }

TEST(Ari, PairCountingExamples) {
  EXPECT_NEAR(ari(L{0, 0, 1, 1}, L{0, 1, 0, 1}), -0.5, 1e-12);
  EXPECT_NEAR(ari(L{0, 1, 2, 3}, L{0, 0, 0, 0}), 0.0, 1e-12);
}

TEST(Loc3, Examples) {
  EXPECT_DOUBLE_EQ(loc3(L{0, 1, 0, 2}, L{0, 1, 0, 2}), 1.0);
  EXPECT_NEAR(loc3(L{0, 0, 1, 1}, L{0, 1, 0, 1}), 2.0 / 6.0, 1e-12);
  // Every pair disagrees: gold all distinct, pred all one session.
  EXPECT_DOUBLE_EQ(loc3(L{0, 1, 2, 3}, L{0, 0, 0, 0}), 0.0);
}

TEST(Loc3, RejectsSingleUtterance) { EXPECT_THROW(loc3(L{0}, L{0}), ValidationError); }

TEST(OneToOne, Examples) {
  EXPECT_DOUBLE_EQ(one_to_one(L{0, 0, 1, 1}, L{1, 1, 0, 0}), 1.0);
  EXPECT_NEAR(one_to_one(L{0, 0, 1, 1}, L{0, 0, 0, 1}), 0.75, 1e-12);
  EXPECT_NEAR(one_to_one(L{0, 1, 2}, L{0, 0, 0}), 1.0 / 3.0, 1e-12);
}

TEST(ShenF, Examples) {
  EXPECT_DOUBLE_EQ(shen_f(L{0, 1, 1}, L{0, 1, 1}), 1.0);
  EXPECT_NEAR(shen_f(L{0, 0, 1, 1}, L{0, 0, 0, 1}), 0.5 * 0.8 + 0.5 * (2.0 / 3.0), 1e-12);
  EXPECT_NEAR(shen_f(L{0, 0}, L{0, 1}), 2.0 / 3.0, 1e-12);
}

TEST(ShenF, AsymmetricWitness) {
  const L a{0, 0, 1, 1}, b{0, 0, 0, 1};
  EXPECT_NE(shen_f(a, b), shen_f(b, a));
}

TEST(Metrics, LengthMismatchRejected) {
  EXPECT_THROW(nmi(L{0, 1}, L{0}), ValidationError);
  EXPECT_THROW(ari(L{0, 1}, L{0}), ValidationError);
  EXPECT_THROW(loc3(L{0, 1}, L{0}), ValidationError);
  EXPECT_THROW(one_to_one(L{0, 1}, L{0}), ValidationError);
  EXPECT_THROW(shen_f(L{0, 1}, L{0}), ValidationError);
}

TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 20)(rng);
    const L g = oracle::random_labels(rng, n, std::uniform_int_distribution<int>(1, 5)(rng));
    const L p = oracle::random_labels(rng, n, std::uniform_int_distribution<int>(1, 5)(rng));
    const L gc = canonicalize(g).labels, pc = canonicalize(p).labels;
    EXPECT_NEAR(nmi(g, p), oracle::nmi(g, p), 1e-9);
    EXPECT_NEAR(ari(g, p), oracle::ari(g, p), 1e-9);
    EXPECT_NEAR(loc3(g, p), oracle::loc3(g, p), 1e-9);
    EXPECT_NEAR(one_to_one(g, p), oracle::one_to_one(gc, pc), 1e-9);
    EXPECT_NEAR(shen_f(g, p), oracle::shen_f(g, p), 1e-9);
  }
}

TEST(Metrics, BoundsSymmetryAndRelabeling) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 30)(rng);
    const L g = oracle::random_labels(rng, n, 6), p = oracle::random_labels(rng, n, 6);
    const auto m = evaluate_pair(g, p);
    for (double v : {m.nmi, m.loc3, m.one_to_one, m.shen_f}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
    EXPECT_GE(m.ari, -1.0);
    EXPECT_LE(m.ari, 1.0);
    EXPECT_NEAR(nmi(g, p), nmi(p, g), 1e-12);
    EXPECT_NEAR(ari(g, p), ari(p, g), 1e-12);

    // Renaming sessions in either labeling changes nothing.
    L pr = p;
    for (auto& v : pr) v = 7 - v;
    const auto r = evaluate_pair(g, pr);
    EXPECT_NEAR(r.nmi, m.nmi, 1e-12);
    EXPECT_NEAR(r.ari, m.ari, 1e-12);
    EXPECT_NEAR(r.loc3, m.loc3, 1e-12);
    EXPECT_NEAR(r.one_to_one, m.one_to_one, 1e-12);
    EXPECT_NEAR(r.shen_f, m.shen_f, 1e-12);

    const auto same = evaluate_pair(g, canonicalize(g).labels);
    EXPECT_EQ(same.nmi, 1.0);
    EXPECT_EQ(same.ari, 1.0);
    EXPECT_EQ(same.loc3, 1.0);
    EXPECT_EQ(same.one_to_one, 1.0);
    EXPECT_EQ(same.shen_f, 1.0);
  }
}

TEST(EvaluateCorpus, UnweightedMean) {
  const std::vector<LabelPair> pairs{{"a", {0, 0, 1, 1}, {1, 1, 0, 0}}, {"b", {0, 0, 1, 1}, {0, 1, 0, 1}}};
  const auto r = evaluate_corpus(pairs);
  ASSERT_EQ(r.per_dialogue.size(), 2u);
  EXPECT_NEAR(r.corpus.ari, 0.25, 1e-12);
  EXPECT_EQ(r.per_dialogue[1].first, "b");
}

TEST(EvaluateCorpus, IdenticalEverywhere) {
  const std::vector<LabelPair> pairs{{"a", {0, 1, 0}, {0, 1, 0}}, {"b", {0, 0, 1, 2}, {2, 2, 0, 1}}};
  const auto r = evaluate_corpus(pairs);
  EXPECT_EQ(r.corpus.nmi, 1.0);
  EXPECT_EQ(r.corpus.ari, 1.0);
  EXPECT_EQ(r.corpus.shen_f, 1.0);
}

TEST(EvaluateCorpus, EmptyRejected) { EXPECT_THROW(evaluate_corpus({}), ValidationError); }

TEST(Assignment, MatchesExhaustiveSearchOnRectangles) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> w(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = std::uniform_int_distribution<int>(1, 6)(rng);
    const int cols = std::uniform_int_distribution<int>(1, 6)(rng);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = w(rng);
    std::vector<int> perm(static_cast<std::size_t>(std::max(rows, cols)));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0;
    do {
      double s = 0;
      for (int r = 0; r < rows; ++r) {
        if (perm[static_cast<std::size_t>(r)] < cols) s += m(r, perm[static_cast<std::size_t>(r)]);
      }
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_DOUBLE_EQ(max_weight_assignment(m).total, best);
  }
}
