#pragma once

// Central finite differences against the analytic model gradient.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "clucdd/model.hpp"
#include "clucdd/synth.hpp"

namespace gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-6): relative above the floor, absolute below it.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct Worst {
  double error = 0.0;
  std::string tensor;
  Eigen::Index index = -1;
  std::size_t checked = 0;
};

/// Compares `grad(tensor)` against central differences of `loss` for every
/// element of every tensor `model.visit` exposes.
template <typename ModelT, typename Grads>
Worst compare(ModelT& model, const Grads& grads, const std::function<double()>& loss) {
  std::vector<const double*> g;
  std::vector<Eigen::Index> sizes;
  grads.visit([&](const char*, const auto& t) {
    g.push_back(t.data());
    sizes.push_back(t.size());
  });
  Worst w;
  std::size_t ti = 0;
  model.visit([&](const char* name, auto& t) {
    const double* gt = g[ti];
    const Eigen::Index gsize = sizes[ti++];
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double keep = t.data()[i];
      t.data()[i] = keep + kStep;
      const double up = loss();
      t.data()[i] = keep - kStep;
      const double down = loss();
      t.data()[i] = keep;
      const double numeric = (up - down) / (2 * kStep);
      const double analytic = gsize == 0 ? 0.0 : gt[i];
      const double e = relative_error(analytic, numeric);
      ++w.checked;
      if (e > w.error) w = {e, name, i, w.checked};
    }
  });
  return w;
}

/// A small random model plus one labeled dialogue with token ids.
struct Instance {
  clucdd::Model model;
  clucdd::EncodedDialogue dialogue;
};

inline Instance make_instance(std::uint64_t seed, int n = 4, int d = 8, int k_max = 4,
                              clucdd::SffVariant variant = clucdd::SffVariant::full) {
  clucdd::SynthConfig sc;
  sc.dialogues = 1;
  sc.n_min = sc.n_max = n;
  sc.k_min = 2;
  sc.k_max = std::min(k_max, n);
  sc.vocab_per_session = 3;
  sc.noise_vocab = 2;
  sc.utterance_min = 1;
  sc.utterance_max = 3;
  sc.seed = seed;
  const auto corpus = clucdd::synthesize(sc);
  auto vocab = clucdd::build_vocabulary(corpus, d, seed + 11);
  // Spread the table so pooled inputs are not all near zero.
  std::mt19937_64 rng(seed + 23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < vocab.table.size(); ++i) vocab.table.data()[i] = u(rng);
  Instance out{clucdd::make_model({d, k_max, variant}, std::move(vocab), seed), {}};
  // Larger output-layer weights give the head gradients some magnitude.
  for (Eigen::Index i = 0; i < out.model.head.out_weight.size(); ++i) out.model.head.out_weight.data()[i] = u(rng);
  out.dialogue = clucdd::prepare_dialogue(out.model, corpus.front());
  return out;
}

}  // namespace gradcheck
