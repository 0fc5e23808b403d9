#pragma once

// The full network: encoder table (optional), fusion stack and session-count
// head, with the per-dialogue loss and its gradient.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clucdd/cluster_head.hpp"
#include "clucdd/corpus.hpp"
#include "clucdd/encoder.hpp"
#include "clucdd/objective.hpp"
#include "clucdd/sff.hpp"

namespace clucdd {

/// Calls f(name, tensor) for every trainable tensor in checkpoint order.
/// Works for const and mutable tensors alike.
template <typename Table, typename Sff, typename Head, typename F>
void for_each_tensor(Table& table, Sff& sff, Head& head, F&& f) {
  f("encoder.table", table);
  f("sff.fc.weight", sff.fc_weight);
  f("sff.fc.bias", sff.fc_bias);
  f("sff.lstm_fwd.w_input", sff.forward.w_input);
  f("sff.lstm_fwd.w_hidden", sff.forward.w_hidden);
  f("sff.lstm_fwd.bias", sff.forward.bias);
  f("sff.lstm_bwd.w_input", sff.backward.w_input);
  f("sff.lstm_bwd.w_hidden", sff.backward.w_hidden);
  f("sff.lstm_bwd.bias", sff.backward.bias);
  f("sff.ffn.weight", sff.ffn_weight);
  f("sff.ffn.bias", sff.ffn_bias);
  f("head.lstm.w_input", head.lstm.w_input);
  f("head.lstm.w_hidden", head.lstm.w_hidden);
  f("head.lstm.bias", head.lstm.bias);
  f("head.out.weight", head.out_weight);
  f("head.out.bias", head.out_bias);
}

struct ModelGradients {
  Matrix table;
  SffParams sff;
  ClusterHeadParams head;

  template <typename F>
  void visit(F&& f) {
    for_each_tensor(table, sff, head, std::forward<F>(f));
  }
  template <typename F>
  void visit(F&& f) const {
    for_each_tensor(table, sff, head, std::forward<F>(f));
  }

  /// Element-wise sum; an empty tensor on the right counts as zero.
  ModelGradients& operator+=(const ModelGradients& o) {
    std::vector<std::pair<const double*, Eigen::Index>> src;
    o.visit([&](const char*, const auto& t) { src.emplace_back(t.data(), t.size()); });
    std::size_t i = 0;
    visit([&](const char* name, auto& t) {
      const auto [s, size] = src[i++];
      if (size == 0) return;
      if (size != t.size()) throw std::logic_error(std::string("gradient shape mismatch in ") + name);
      for (Eigen::Index j = 0; j < size; ++j) t.data()[j] += s[j];
    });
    return *this;
  }

  ModelGradients& operator*=(double s) {
    visit([&](const char*, auto& t) { t *= s; });
    return *this;
  }
};

struct ModelShape {
  int dim = 768;
  int k_max = 4;
  SffVariant variant = SffVariant::full;
};

struct Model {
  ModelShape shape;
  TokenVocabulary vocab;  // empty when utterance vectors come precomputed
  SffParams sff;
  ClusterHeadParams head;

  bool uses_table() const noexcept { return vocab.size() > 0; }

  template <typename F>
  void visit(F&& f) {
    for_each_tensor(vocab.table, sff, head, std::forward<F>(f));
  }
  template <typename F>
  void visit(F&& f) const {
    for_each_tensor(vocab.table, sff, head, std::forward<F>(f));
  }

  ModelGradients zero_gradients() const {
    ModelGradients g;
    g.table = Matrix::Zero(vocab.table.rows(), vocab.table.cols());
    g.sff = SffParams::zeros(shape.dim, shape.variant);
    g.head = ClusterHeadParams::zeros(shape.dim, shape.k_max);
    return g;
  }
};

/// Randomly initialized model. Pass an empty vocabulary for precomputed
/// utterance vectors.
inline Model make_model(ModelShape shape, TokenVocabulary vocab, std::uint64_t seed) {
  if (shape.dim < 2 || shape.dim % 2 != 0) throw ConfigError("model dimension must be even and >= 2");
  if (vocab.size() > 0 && vocab.dim() != shape.dim) {
    throw ConfigError("vocabulary table width does not match model dimension");
  }
  std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
  Model m;
  m.shape = shape;
  m.vocab = std::move(vocab);
  m.sff = SffParams::random(shape.dim, shape.variant, rng);
  m.head = ClusterHeadParams::random(shape.dim, shape.k_max, rng);
  return m;
}

/// A dialogue resolved against an encoder: either token ids per utterance or
/// a fixed n x d matrix of precomputed vectors.
struct EncodedDialogue {
  std::string dialogue_id;
  std::vector<std::vector<int>> tokens;
  Matrix fixed;
  std::optional<SessionLabeling> gold;

  std::size_t n() const noexcept {
    return tokens.empty() ? static_cast<std::size_t>(fixed.rows()) : tokens.size();
  }
};

inline EncodedDialogue prepare_dialogue(const Model& model, const Dialogue& d,
                                        const EmbeddingMap* precomputed = nullptr) {
  EncodedDialogue e;
  e.dialogue_id = d.dialogue_id;
  if (d.labeled()) e.gold = d.labeling();
  if (model.uses_table()) {
    for (const auto& u : d.utterances) e.tokens.push_back(model.vocab.tokenize(u.text));
    return e;
  }
  if (!precomputed) throw ConfigError("model has no token table and no precomputed embeddings were given");
  e.fixed.resize(static_cast<Eigen::Index>(d.n()), model.shape.dim);
  for (std::size_t i = 0; i < d.n(); ++i) {
    auto it = precomputed->find(d.utterances[i].id);
    if (it == precomputed->end()) {
      throw ValidationError("no precomputed embedding for utterance '" + d.utterances[i].id + "'");
    }
    if (it->second.size() != model.shape.dim) {
      throw ValidationError("embedding for '" + d.utterances[i].id + "' has dimension " +
                            std::to_string(it->second.size()) + ", model expects " +
                            std::to_string(model.shape.dim));
    }
    e.fixed.row(static_cast<Eigen::Index>(i)) = it->second.transpose();
  }
  return e;
}

/// Pooled utterance vectors, n x d.
inline Matrix embed(const Model& model, const EncodedDialogue& e) {
  if (e.tokens.empty()) return e.fixed;
  Matrix u(static_cast<Eigen::Index>(e.tokens.size()), model.shape.dim);
  for (std::size_t i = 0; i < e.tokens.size(); ++i) {
    u.row(static_cast<Eigen::Index>(i)) = encode_utterance(e.tokens[i], model.vocab.table).transpose();
  }
  return u;
}

/// Final normalized representations r (n x d).
inline Matrix represent(const Model& model, const EncodedDialogue& e) {
  return sff_forward(embed(model, e), model.sff, model.shape.variant).output;
}

inline SessionCountDistribution session_count_distribution(const Model& model, const EncodedDialogue& e) {
  return head_forward(embed(model, e), model.head);
}

struct DialogueLoss {
  double total = 0.0;
  double contrastive = 0.0;
  double head = 0.0;
};

/// Loss L_C + gamma L_H for one labeled dialogue. When `grads` is non-null the
/// gradient is accumulated into it (scaled by `grad_scale`).
inline DialogueLoss dialogue_loss(const Model& model, const EncodedDialogue& e, const ContrastiveConfig& cfg,
                                  ModelGradients* grads = nullptr, double grad_scale = 1.0) {
  if (!e.gold) throw ValidationError("dialogue '" + e.dialogue_id + "' has no session labels");
  const Matrix u = embed(model, e);
  const SffActivations acts = sff_forward(u, model.sff, model.shape.variant);
  const HeadActivations head = head_trace(u, model.head);
  const LossAndGradient lc = contrastive_loss(acts.output, *e.gold, cfg);
  DialogueLoss out;
  out.contrastive = lc.loss;
  out.head = head_loss(head.dist, e.gold->k);
  out.total = total_loss(out.contrastive, out.head, cfg.gamma);
  if (!grads) return out;

  SffGradients gs = sff_backward(acts, model.sff, lc.grad * grad_scale);
  HeadGradients gh = head_backward(head, model.head, e.gold->k, cfg.gamma * grad_scale);
  ModelGradients local;
  local.sff = std::move(gs.params);
  local.head = std::move(gh.params);
  *grads += local;
  // The table gradient is sparse, so it is scattered straight into the accumulator.
  if (model.uses_table() && grads->table.size() > 0) {
    const Matrix grad_u = gs.embeddings + gh.embeddings;
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      encode_utterance_backward(e.tokens[i], grad_u.row(static_cast<Eigen::Index>(i)).transpose(),
                                grads->table);
    }
  }
  return out;
}

}  // namespace clucdd
