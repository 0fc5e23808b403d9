#pragma once

// Disentanglement metrics: NMI, ARI, Loc3, one-to-one overlap and Shen-F,
// plus unweighted corpus averaging.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clucdd/assignment.hpp"
#include "clucdd/corpus.hpp"
#include "clucdd/error.hpp"

namespace clucdd {

using Labels = std::span<const int>;

namespace detail {

inline void check_lengths(Labels gold, Labels pred, const char* metric) {
  if (gold.size() != pred.size()) {
    throw ValidationError(std::string(metric) + ": gold has " + std::to_string(gold.size()) +
                          " labels, prediction has " + std::to_string(pred.size()));
  }
  if (gold.empty()) throw ValidationError(std::string(metric) + ": empty labeling");
}

/// Overlap counts n_ij between canonical gold session i and predicted j.
struct Contingency {
  Eigen::MatrixXd table;
  Eigen::VectorXd gold_sizes, pred_sizes;
  SessionLabeling gold, pred;
  double n = 0.0;
};

inline Contingency contingency(Labels gold, Labels pred) {
  Contingency c;
  c.gold = canonicalize(gold);
  c.pred = canonicalize(pred);
  c.table = Eigen::MatrixXd::Zero(c.gold.k, c.pred.k);
  for (std::size_t t = 0; t < gold.size(); ++t) c.table(c.gold.labels[t], c.pred.labels[t]) += 1.0;
  c.gold_sizes = c.table.rowwise().sum();
  c.pred_sizes = c.table.colwise().sum().transpose();
  c.n = static_cast<double>(gold.size());
  return c;
}

inline double entropy(const Eigen::VectorXd& sizes, double n) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < sizes.size(); ++i) {
    if (sizes[i] > 0.0) h -= sizes[i] / n * std::log(sizes[i] / n);
  }
  return h;
}

inline double choose2(double x) { return 0.5 * x * (x - 1.0); }

}  // namespace detail

/// Mutual information over the arithmetic mean of the two entropies.
inline double nmi(Labels gold, Labels pred) {
  detail::check_lengths(gold, pred, "nmi");
  const auto c = detail::contingency(gold, pred);
  if (c.gold == c.pred) return 1.0;
  const double hg = detail::entropy(c.gold_sizes, c.n);
  const double hp = detail::entropy(c.pred_sizes, c.n);
  if (hg == 0.0 && hp == 0.0) return 1.0;
  if (hg == 0.0 || hp == 0.0) return 0.0;
  double mi = 0.0;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
      const double nij = c.table(i, j);
      if (nij > 0.0) mi += nij / c.n * std::log(c.n * nij / (c.gold_sizes[i] * c.pred_sizes[j]));
    }
  }
  return std::clamp(mi / (0.5 * (hg + hp)), 0.0, 1.0);
}

/// Hubert-Arabie adjusted Rand index.
inline double ari(Labels gold, Labels pred) {
  detail::check_lengths(gold, pred, "ari");
  const auto c = detail::contingency(gold, pred);
  if (c.gold == c.pred) return 1.0;
  double index = 0.0;
  for (Eigen::Index i = 0; i < c.table.size(); ++i) index += detail::choose2(c.table.data()[i]);
  double a = 0.0, b = 0.0;
  for (Eigen::Index i = 0; i < c.gold_sizes.size(); ++i) a += detail::choose2(c.gold_sizes[i]);
  for (Eigen::Index j = 0; j < c.pred_sizes.size(); ++j) b += detail::choose2(c.pred_sizes[j]);
  const double pairs = detail::choose2(c.n);
  const double expected = a * b / pairs;
  const double max_index = 0.5 * (a + b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Fraction of index pairs at distance 1..3 whose same/different-session
/// status agrees between gold and prediction.
inline double loc3(Labels gold, Labels pred) {
  if (gold.size() != pred.size()) {
    throw ValidationError("loc3: gold and prediction lengths differ");
  }
  if (gold.size() < 2) throw ValidationError("loc3: needs at least 2 utterances");
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = i + 1; j < gold.size() && j - i <= 3; ++j) {
      ++total;
      if ((gold[i] == gold[j]) == (pred[i] == pred[j])) ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

/// Optimal one-to-one session matching; matched overlap over n.
inline double one_to_one(Labels gold, Labels pred) {
  detail::check_lengths(gold, pred, "one_to_one");
  const auto c = detail::contingency(gold, pred);
  return max_weight_assignment(c.table).total / c.n;
}

/// sum_i (n_i / n) max_j 2 n_ij / (n_i + n_j), i over gold sessions.
inline double shen_f(Labels gold, Labels pred) {
  detail::check_lengths(gold, pred, "shen_f");
  const auto c = detail::contingency(gold, pred);
  double weighted = 0.0;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i) {
    double best = 0.0;
    for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
      best = std::max(best, 2.0 * c.table(i, j) / (c.gold_sizes[i] + c.pred_sizes[j]));
    }
    weighted += c.gold_sizes[i] * best;
  }
  return weighted / c.n;
}

struct MetricValues {
  double nmi = 0.0;
  double ari = 0.0;
  double loc3 = 0.0;
  double one_to_one = 0.0;
  double shen_f = 0.0;
};

inline MetricValues evaluate_pair(Labels gold, Labels pred) {
  return {nmi(gold, pred), ari(gold, pred), loc3(gold, pred), one_to_one(gold, pred), shen_f(gold, pred)};
}

struct LabelPair {
  std::string dialogue_id;
  std::vector<int> gold;
  std::vector<int> pred;
};

struct MetricReport {
  MetricValues corpus;
  std::vector<std::pair<std::string, MetricValues>> per_dialogue;
};

/// Per-dialogue metrics and their unweighted mean.
inline MetricReport evaluate_corpus(std::span<const LabelPair> pairs) {
  if (pairs.empty()) throw ValidationError("evaluate_corpus: no dialogues to score");
  MetricReport r;
  for (const auto& p : pairs) {
    if (p.gold.size() != p.pred.size()) {
      throw ValidationError("dialogue '" + p.dialogue_id + "': gold and prediction lengths differ");
    }
    MetricValues m = evaluate_pair(p.gold, p.pred);
    r.corpus.nmi += m.nmi;
    r.corpus.ari += m.ari;
    r.corpus.loc3 += m.loc3;
    r.corpus.one_to_one += m.one_to_one;
    r.corpus.shen_f += m.shen_f;
    r.per_dialogue.emplace_back(p.dialogue_id, m);
  }
  const auto count = static_cast<double>(pairs.size());
  r.corpus.nmi /= count;
  r.corpus.ari /= count;
  r.corpus.loc3 /= count;
  r.corpus.one_to_one /= count;
  r.corpus.shen_f /= count;
  return r;
}

}  // namespace clucdd
