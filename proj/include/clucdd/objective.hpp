#pragma once

// Pairwise margin contrastive loss over fused utterance vectors and the
// combined training objective.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clucdd/corpus.hpp"
#include "clucdd/error.hpp"

namespace clucdd {

using Matrix = Eigen::MatrixXd;

/// y = 0: same session; y = 1: different sessions.
struct PairLabel {
  int i = 0;
  int j = 0;
  int y = 0;

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

enum class Reduction { sum, mean };

struct ContrastiveConfig {
  double margin = 1.0;
  double gamma = 0.1;
  Reduction reduction = Reduction::sum;

  void validate() const {
    if (!(margin > 0.0)) throw ConfigError("margin must be positive");
    if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
  }
};

inline std::string to_string(Reduction r) { return r == Reduction::sum ? "sum" : "mean"; }

inline Reduction reduction_from_string(const std::string& s) {
  if (s == "sum") return Reduction::sum;
  if (s == "mean") return Reduction::mean;
  throw ConfigError("reduction must be 'sum' or 'mean', got '" + s + "'");
}

inline std::vector<PairLabel> pair_labels(const SessionLabeling& gold) {
  const int n = static_cast<int>(gold.size());
  std::vector<PairLabel> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(std::max(n - 1, 0)) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      out.push_back({i, j, gold.labels[static_cast<std::size_t>(i)] == gold.labels[static_cast<std::size_t>(j)] ? 0 : 1});
    }
  }
  return out;
}

template <typename A, typename B>
double pair_distance(const Eigen::MatrixBase<A>& ri, const Eigen::MatrixBase<B>& rj) {
  return (ri - rj).norm();
}

/// (1-y) d^2/2 + y max(0, m-d)^2/2.
inline double pair_loss(double d, int y, double margin) {
  if (y == 0) return 0.5 * d * d;
  const double slack = std::max(0.0, margin - d);
  return 0.5 * slack * slack;
}

struct LossAndGradient {
  double loss = 0.0;
  Matrix grad;
};

/// Sum (or mean) of pair_loss over every i < j pair, with the exact gradient
/// with respect to the rows of `r`. Dissimilar pairs at distance 0 or beyond
/// the margin contribute no gradient.
inline LossAndGradient contrastive_loss(const Matrix& r, const SessionLabeling& gold,
                                        const ContrastiveConfig& cfg) {
  if (static_cast<std::size_t>(r.rows()) != gold.size()) {
    throw ValidationError("contrastive_loss: representation rows do not match labeling length");
  }
  const Eigen::Index n = r.rows();
  LossAndGradient out;
  out.grad = Matrix::Zero(n, r.cols());
  Eigen::RowVectorXd diff(r.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      diff = r.row(i) - r.row(j);
      const double d = diff.norm();
      if (gold.labels[static_cast<std::size_t>(i)] == gold.labels[static_cast<std::size_t>(j)]) {
        out.loss += 0.5 * d * d;
        out.grad.row(i) += diff;
        out.grad.row(j) -= diff;
      } else if (d < cfg.margin) {
        const double slack = cfg.margin - d;
        out.loss += 0.5 * slack * slack;
        if (d > 0.0) {
          const double coef = -slack / d;
          out.grad.row(i) += coef * diff;
          out.grad.row(j) -= coef * diff;
        }
      }
    }
  }
  if (cfg.reduction == Reduction::mean && n > 1) {
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    out.loss /= pairs;
    out.grad /= pairs;
  }
  return out;
}

/// L_C + gamma L_H.
inline double total_loss(double contrastive, double head, double gamma) { return contrastive + gamma * head; }

}  // namespace clucdd
