#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "clucdd/cluster_head.hpp"
#include "clucdd/objective.hpp"
#include "support/gradcheck.hpp"

using namespace clucdd;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

SessionCountDistribution dist(std::initializer_list<double> p) {
  SessionCountDistribution d;
  d.probs = Eigen::Map<const Vector>(p.begin(), static_cast<Eigen::Index>(p.size()));
  return d;
}

struct View {
  Matrix* u;
  ClusterHeadParams* p;
  template <typename F>
  void visit(F&& f) {
    f("u", *u);
    f("w_input", p->lstm.w_input);
    f("w_hidden", p->lstm.w_hidden);
    f("bias", p->lstm.bias);
    f("out_weight", p->out_weight);
    f("out_bias", p->out_bias);
  }
};

struct GradView {
  const HeadGradients* g;
  template <typename F>
  void visit(F&& f) const {
    f("u", g->embeddings);
    f("w_input", g->params.lstm.w_input);
    f("w_hidden", g->params.lstm.w_hidden);
    f("bias", g->params.lstm.bias);
    f("out_weight", g->params.out_weight);
    f("out_bias", g->params.out_bias);
  }
};

struct MatrixView {
  Matrix* r;
  template <typename F>
  void visit(F&& f) {
    f("r", *r);
  }
};

struct MatrixGradView {
  Matrix g;
  template <typename F>
  void visit(F&& f) const {
    f("r", g);
  }
};

}  // namespace

TEST(HeadForward, ZeroOutputLayerIsUniform) {
  std::mt19937_64 rng(1);
  auto p = ClusterHeadParams::random(6, 4, rng);
  p.out_weight.setZero();
  const auto d = head_forward(random_matrix(5, 6, rng), p);
  for (int k = 1; k <= 4; ++k) EXPECT_DOUBLE_EQ(d.p(k), 0.25);
}

TEST(HeadForward, SaturatesAndNormalizes) {
  std::mt19937_64 rng(2);
  auto p = ClusterHeadParams::random(6, 4, rng);
  p.out_bias[2] = 1e3;
  EXPECT_NEAR(head_forward(random_matrix(3, 6, rng), p).p(3), 1.0, 1e-12);
  p.out_bias.setZero();
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_NEAR(head_forward(random_matrix(4, 6, rng), p).probs.sum(), 1.0, 1e-12);
  }
  EXPECT_THROW(ClusterHeadParams::zeros(6, 1), ConfigError);
}

TEST(HeadLoss, Examples) {
  EXPECT_DOUBLE_EQ(head_loss(dist({0, 1, 0, 0}), 2), 0.0);
  EXPECT_NEAR(head_loss(dist({0.25, 0.25, 0.25, 0.25}), 3), std::log(4.0), 1e-12);
  EXPECT_NEAR(head_loss(dist({0.5, 0.5, 0, 0}), 1), std::log(2.0), 1e-12);
  EXPECT_THROW(head_loss(dist({0.5, 0.5}), 3), ValidationError);
}

TEST(PredictK, ArgmaxWithSmallTieBreak) {
  EXPECT_EQ(predict_k(dist({0.1, 0.7, 0.1, 0.1})), 2);
  EXPECT_EQ(predict_k(dist({0.25, 0.25, 0.25, 0.25})), 1);
  EXPECT_EQ(predict_k(dist({0.5, 0.5, 0, 0})), 1);
}

TEST(PredictK, InvariantUnderMonotoneLogitMaps) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector logits = random_matrix(5, 1, rng).col(0);
    SessionCountDistribution a{softmax(logits)}, b{softmax((3.0 * logits.array() + 1.0).exp().matrix())};
    EXPECT_EQ(predict_k(a), predict_k(b));
  }
}

TEST(HeadBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto p = ClusterHeadParams::random(6, 4, rng);
  for (Eigen::Index i = 0; i < p.out_weight.size(); ++i) p.out_weight.data()[i] *= 4.0;
  Matrix u = random_matrix(4, 6, rng);
  for (int k_gold = 1; k_gold <= 4; ++k_gold) {
    auto loss = [&] { return 0.7 * head_loss(head_forward(u, p), k_gold); };
    const auto g = head_backward(head_trace(u, p), p, k_gold, 0.7);
    View view{&u, &p};
    const auto worst = gradcheck::compare(view, GradView{&g}, loss);
    EXPECT_LT(worst.error, gradcheck::kTolerance) << worst.tensor << "[" << worst.index << "]";
  }
}

TEST(PairLabels, Examples) {
  const auto p = pair_labels(canonicalize(std::vector<int>{0, 0, 1}));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[0].i, 0);
  EXPECT_EQ(p[0].j, 1);
  EXPECT_EQ(p[0].y, 0);
  EXPECT_EQ(p[1].y, 1);
  EXPECT_EQ(p[2].y, 1);
  const auto same = pair_labels(canonicalize(std::vector<int>{3, 3, 3, 3}));
  EXPECT_EQ(same.size(), 6u);
  for (const auto& q : same) EXPECT_EQ(q.y, 0);
  EXPECT_TRUE(pair_labels(canonicalize(std::vector<int>{0})).empty());
}

TEST(PairDistance, UnitVectorCases) {
  const Vector a = Vector::Unit(3, 0), b = Vector::Unit(3, 1);
  EXPECT_EQ(pair_distance(a, a), 0.0);
  EXPECT_NEAR(pair_distance(a, b), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(pair_distance(a, Vector(-a)), 2.0, 1e-15);
}

TEST(PairLoss, Examples) {
  EXPECT_NEAR(pair_loss(0.8, 0, 1.0), 0.32, 1e-12);
  EXPECT_NEAR(pair_loss(0.3, 1, 1.0), 0.245, 1e-12);
  EXPECT_EQ(pair_loss(1.2, 1, 1.0), 0.0);
  // Continuous through the hinge.
  EXPECT_NEAR(pair_loss(1.0 - 1e-9, 1, 1.0), pair_loss(1.0, 1, 1.0), 1e-15);
}

TEST(ContrastiveLoss, ZeroAtConstructedMinima) {
  Matrix r(4, 3);
  r << 1, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0;
  const auto all_same = contrastive_loss(r, canonicalize(std::vector<int>{0, 0, 0, 0}), {});
  EXPECT_EQ(all_same.loss, 0.0);
  EXPECT_EQ(all_same.grad.cwiseAbs().maxCoeff(), 0.0);

  r.row(2) = Vector::Unit(3, 1).transpose();
  r.row(3) = Vector::Unit(3, 1).transpose();
  const auto two = contrastive_loss(r, canonicalize(std::vector<int>{0, 0, 1, 1}), {});
  EXPECT_EQ(two.loss, 0.0);
}

TEST(ContrastiveLoss, NonNegativeAndZeroOnlyAtOptimum) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix r = random_matrix(5, 4, rng);
    r.rowwise().normalize();
    const auto l = contrastive_loss(r, canonicalize(std::vector<int>{0, 1, 0, 2, 1}), {});
    EXPECT_GT(l.loss, 0.0);
  }
}

TEST(ContrastiveLoss, DissimilarCoincidentPairHasZeroSubgradient) {
  Matrix r = Matrix::Zero(2, 3);
  r.row(0) << 0, 1, 0;
  r.row(1) = r.row(0);
  const auto l = contrastive_loss(r, canonicalize(std::vector<int>{0, 1}), {});
  EXPECT_DOUBLE_EQ(l.loss, 0.5);
  EXPECT_EQ(l.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ContrastiveLoss, MeanReductionDividesByPairCount) {
  std::mt19937_64 rng(6);
  const Matrix r = random_matrix(4, 3, rng);
  const auto gold = canonicalize(std::vector<int>{0, 1, 1, 0});
  ContrastiveConfig mean;
  mean.reduction = Reduction::mean;
  const auto s = contrastive_loss(r, gold, {});
  const auto m = contrastive_loss(r, gold, mean);
  EXPECT_NEAR(m.loss * 6.0, s.loss, 1e-12);
  EXPECT_TRUE((m.grad * 6.0).isApprox(s.grad, 1e-12));
}

TEST(ContrastiveLoss, SymmetricInPairOrder) {
  std::mt19937_64 rng(7);
  const Matrix r = random_matrix(5, 3, rng);
  const auto gold = canonicalize(std::vector<int>{0, 1, 1, 0, 2});
  double by_hand = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i == j) continue;
      const int y = gold.labels[static_cast<std::size_t>(i)] != gold.labels[static_cast<std::size_t>(j)];
      by_hand += pair_loss(pair_distance(r.row(i), r.row(j)), y, 1.0);
    }
  }
  EXPECT_NEAR(contrastive_loss(r, gold, {}).loss, 0.5 * by_hand, 1e-12);
}

TEST(ContrastiveLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (auto reduction : {Reduction::sum, Reduction::mean}) {
    Matrix r = random_matrix(4, 8, rng);
    r.rowwise().normalize();
    ContrastiveConfig cfg;
    cfg.reduction = reduction;
    const auto gold = canonicalize(std::vector<int>{0, 1, 0, 1});
    MatrixView view{&r};
    const MatrixGradView grad{contrastive_loss(r, gold, cfg).grad};
    const auto worst = gradcheck::compare(view, grad, [&] { return contrastive_loss(r, gold, cfg).loss; });
    EXPECT_LT(worst.error, gradcheck::kTolerance);
  }
}

TEST(TotalLoss, Examples) {
  EXPECT_NEAR(total_loss(2.0, 0.5, 0.1), 2.05, 1e-15);
  EXPECT_EQ(total_loss(1.5, 0.0, 0.3), 1.5);
  EXPECT_EQ(total_loss(0.0, 0.0, 0.1), 0.0);
}

TEST(ContrastiveConfig, Validation) {
  ContrastiveConfig c;
  c.margin = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(reduction_from_string("median"), ConfigError);
}
