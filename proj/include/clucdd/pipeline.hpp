#pragma once

// Dialogue -> representations -> session count -> clustering -> labels.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clucdd/clustering.hpp"
#include "clucdd/metrics.hpp"
#include "clucdd/model.hpp"

namespace clucdd {

/// Where the session count for k-based methods comes from.
enum class KSource { gold, head, given };

inline std::string to_string(KSource k) {
  switch (k) {
    case KSource::gold: return "gold";
    case KSource::head: return "head";
    case KSource::given: return "given";
  }
  return "head";
}

inline KSource k_source_from_string(const std::string& s) {
  if (s == "gold") return KSource::gold;
  if (s == "head") return KSource::head;
  if (s == "given") return KSource::given;
  throw ConfigError("unknown k source '" + s + "'");
}

struct DisentangleOptions {
  ClusterMethod method = ClusterMethod::kmeans;
  KSource k_source = KSource::head;
  std::optional<int> given_k;
  double eps = 0.5;
  int min_pts = 3;
  AffinityPropagationOptions ap;
  KMeansOptions kmeans;
  std::uint64_t seed = 0;
};

/// Resolves k for one dialogue. Head predictions are clamped to 1..n.
inline int resolve_k(const Model& model, const EncodedDialogue& e, const DisentangleOptions& opt) {
  switch (opt.k_source) {
    case KSource::gold:
      if (!e.gold) throw ConfigError("k source 'gold' needs labeled dialogues ('" + e.dialogue_id + "' is not)");
      return e.gold->k;
    case KSource::given:
      if (!opt.given_k) throw ConfigError("k source 'given' needs an explicit k");
      return *opt.given_k;
    case KSource::head:
      return std::clamp(predict_k(session_count_distribution(model, e)), 1, static_cast<int>(e.n()));
  }
  return 1;
}

inline SessionLabeling cluster_representations(const Matrix& r, std::optional<int> k,
                                               const DisentangleOptions& opt) {
  switch (opt.method) {
    case ClusterMethod::kmeans: return kmeans(r, *k, opt.seed, opt.kmeans).labels;
    case ClusterMethod::gmm: return gmm(r, *k, opt.seed, GmmOptions{.init = opt.kmeans}).labels;
    case ClusterMethod::dbscan: return dbscan(r, opt.eps, opt.min_pts).labels;
    case ClusterMethod::ap: return affinity_propagation(r, opt.ap).labels;
  }
  return {};
}

inline SessionLabeling disentangle(const Model& model, const EncodedDialogue& e, const DisentangleOptions& opt) {
  const Matrix r = represent(model, e);
  std::optional<int> k;
  if (method_needs_k(opt.method)) k = resolve_k(model, e, opt);
  return cluster_representations(r, k, opt);
}

/// Predicted labels for every dialogue, in input order.
inline std::vector<SessionLabeling> disentangle_all(const Model& model, std::span<const EncodedDialogue> dialogues,
                                                    const DisentangleOptions& opt) {
  std::vector<SessionLabeling> out;
  out.reserve(dialogues.size());
  for (const auto& e : dialogues) out.push_back(disentangle(model, e, opt));
  return out;
}

/// Disentangles labeled dialogues and scores them against their gold labels.
inline MetricReport score_dialogues(const Model& model, std::span<const EncodedDialogue> dialogues,
                                    const DisentangleOptions& opt) {
  std::vector<LabelPair> pairs;
  for (const auto& e : dialogues) {
    if (!e.gold) throw ValidationError("dialogue '" + e.dialogue_id + "' has no gold labels to score against");
    pairs.push_back({e.dialogue_id, e.gold->labels, disentangle(model, e, opt).labels});
  }
  return evaluate_corpus(pairs);
}

/// Fraction of dialogues whose head prediction equals the gold session count.
inline double head_accuracy(const Model& model, std::span<const EncodedDialogue> dialogues) {
  if (dialogues.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& e : dialogues) {
    if (e.gold && predict_k(session_count_distribution(model, e)) == e.gold->k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dialogues.size());
}

}  // namespace clucdd
