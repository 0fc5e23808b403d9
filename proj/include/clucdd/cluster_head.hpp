#pragma once

// Session-count head: unidirectional LSTM over the pooled utterance vectors,
// final hidden state -> linear -> softmax over k = 1..K_max.

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "clucdd/error.hpp"
#include "clucdd/lstm.hpp"

namespace clucdd {

struct ClusterHeadParams {
  LstmParams lstm;  // hidden d
  Matrix out_weight;  // K_max x d
  Vector out_bias;    // K_max

  int k_max() const noexcept { return static_cast<int>(out_bias.size()); }

  static ClusterHeadParams zeros(Eigen::Index d, int k_max) {
    if (k_max < 2) throw ConfigError("k_max must be at least 2");
    return {LstmParams::zeros(d, d), Matrix::Zero(k_max, d), Vector::Zero(k_max)};
  }

  template <typename Rng>
  static ClusterHeadParams random(Eigen::Index d, int k_max, Rng& rng) {
    ClusterHeadParams p = zeros(d, k_max);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    p.lstm = LstmParams::random(d, d, scale, rng);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < p.out_weight.size(); ++i) p.out_weight.data()[i] = u(rng);
    return p;
  }
};

/// P(y = j + 1) in slot j.
struct SessionCountDistribution {
  Vector probs;

  int k_max() const noexcept { return static_cast<int>(probs.size()); }
  double p(int k) const { return probs[k - 1]; }
};

inline Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

struct HeadActivations {
  LstmTrace trace;
  Vector logits;
  SessionCountDistribution dist;
};

inline HeadActivations head_trace(const Matrix& embeddings, const ClusterHeadParams& p) {
  HeadActivations a;
  a.trace = lstm_forward(embeddings.transpose(), p.lstm);
  a.logits = p.out_weight * a.trace.hidden.col(a.trace.steps() - 1) + p.out_bias;
  a.dist.probs = softmax(a.logits);
  return a;
}

inline SessionCountDistribution head_forward(const Matrix& embeddings, const ClusterHeadParams& p) {
  return head_trace(embeddings, p).dist;
}

/// -log P(y = k_gold).
inline double head_loss(const SessionCountDistribution& dist, int k_gold) {
  if (k_gold < 1 || k_gold > dist.k_max()) {
    throw ValidationError("gold session count " + std::to_string(k_gold) + " is outside 1.." +
                          std::to_string(dist.k_max()));
  }
  return -std::log(dist.p(k_gold));
}

/// Argmax + 1; the first maximum wins so ties go to the smaller k.
inline int predict_k(const SessionCountDistribution& dist) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < dist.probs.size(); ++j) {
    if (dist.probs[j] > dist.probs[best]) best = j;
  }
  return static_cast<int>(best) + 1;
}

struct HeadGradients {
  ClusterHeadParams params;
  Matrix embeddings;  // n x d
};

/// Gradient of `scale * head_loss` with respect to the head parameters and
/// its input embeddings.
inline HeadGradients head_backward(const HeadActivations& a, const ClusterHeadParams& p, int k_gold,
                                   double scale = 1.0) {
  HeadGradients g;
  g.params = ClusterHeadParams::zeros(p.lstm.input(), p.k_max());
  Vector grad_logits = a.dist.probs;
  grad_logits[k_gold - 1] -= 1.0;
  grad_logits *= scale;
  const Eigen::Index last = a.trace.steps() - 1;
  g.params.out_weight = grad_logits * a.trace.hidden.col(last).transpose();
  g.params.out_bias = grad_logits;
  Matrix grad_hidden = Matrix::Zero(p.lstm.hidden(), a.trace.steps());
  grad_hidden.col(last) = p.out_weight.transpose() * grad_logits;
  g.embeddings = lstm_backward(a.trace, p.lstm, grad_hidden, g.params.lstm).transpose();
  return g;
}

}  // namespace clucdd
