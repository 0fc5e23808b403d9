#pragma once

// Synthetic entangled-chat generator. Every session draws its content words
// from its own topic vocabulary; noise words are shared by all topics.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "clucdd/corpus.hpp"
#include "clucdd/error.hpp"

namespace clucdd {

struct SynthConfig {
  int dialogues = 100;
  int n_min = 20;
  int n_max = 50;
  int k_min = 2;
  int k_max = 4;
  int vocab_per_session = 20;  // content words per topic
  double noise_rate = 0.1;     // per-token probability of a shared noise word
  std::uint64_t seed = 0;
  int topics = 0;               // topic pool size, 0 means k_max; sessions in one dialogue get distinct topics
  int noise_vocab = 20;
  int utterance_min = 4;        // tokens per utterance
  int utterance_max = 10;
  double burstiness = 0.0;      // probability the next utterance continues the current session
  double ambiguous_rate = 0.0;  // probability an utterance consists of noise words only
  std::string id_prefix = "synth";

  int topic_pool() const noexcept { return topics > 0 ? topics : k_max; }

  void validate() const {
    if (dialogues < 0) throw ConfigError("synth: dialogue count must be non-negative");
    if (n_min < 2 || n_max < n_min) throw ConfigError("synth: need 2 <= n_min <= n_max");
    if (k_min < 1 || k_max < k_min) throw ConfigError("synth: need 1 <= k_min <= k_max");
    if (k_min > n_min) throw ConfigError("synth: k_min cannot exceed n_min");
    if (topics != 0 && topics < k_max) throw ConfigError("synth: topic pool must hold at least k_max topics");
    if (vocab_per_session < 1 || noise_vocab < 1) throw ConfigError("synth: vocabularies must be non-empty");
    if (utterance_min < 1 || utterance_max < utterance_min) throw ConfigError("synth: bad utterance length range");
    for (double p : {noise_rate, burstiness, ambiguous_rate}) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: probabilities must lie in [0, 1]");
    }
  }
};

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"dialogues", c.dialogues},
          {"n_min", c.n_min},
          {"n_max", c.n_max},
          {"k_min", c.k_min},
          {"k_max", c.k_max},
          {"vocab_per_session", c.vocab_per_session},
          {"noise_rate", c.noise_rate},
          {"seed", c.seed},
          {"topics", c.topic_pool()},
          {"noise_vocab", c.noise_vocab},
          {"utterance_min", c.utterance_min},
          {"utterance_max", c.utterance_max},
          {"burstiness", c.burstiness},
          {"ambiguous_rate", c.ambiguous_rate}};
}

namespace detail {

template <typename Rng>
int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <typename Rng>
bool bernoulli(Rng& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

/// Session index per position; every one of the k sessions appears.
template <typename Rng>
std::vector<int> session_sequence(Rng& rng, int n, int k, double burstiness) {
  std::vector<int> seq(static_cast<std::size_t>(n));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    int cur = uniform_int(rng, 0, k - 1);
    for (int i = 0; i < n; ++i) {
      if (burstiness <= 0.0) {
        cur = uniform_int(rng, 0, k - 1);
      } else if (i > 0 && k > 1 && !bernoulli(rng, burstiness)) {
        const int step = uniform_int(rng, 1, k - 1);
        cur = (cur + step) % k;
      }
      seq[static_cast<std::size_t>(i)] = cur;
    }
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (int s : seq) seen[static_cast<std::size_t>(s)] = true;
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) return seq;
  }
  // Extremely bursty settings: place the missing sessions at the tail.
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int s : seq) seen[static_cast<std::size_t>(s)] = true;
  int pos = n - 1;
  for (int s = 0; s < k; ++s) {
    if (!seen[static_cast<std::size_t>(s)]) seq[static_cast<std::size_t>(pos--)] = s;
  }
  return seq;
}

}  // namespace detail

inline std::string topic_word(int topic, int index) {
  return "s" + std::to_string(topic) + "w" + std::to_string(index);
}

inline std::string noise_word(int index) { return "n" + std::to_string(index); }

inline std::vector<Dialogue> synthesize(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<Dialogue> out;
  out.reserve(static_cast<std::size_t>(cfg.dialogues));
  for (int di = 0; di < cfg.dialogues; ++di) {
    const int n = detail::uniform_int(rng, cfg.n_min, cfg.n_max);
    const int k = detail::uniform_int(rng, cfg.k_min, std::min(cfg.k_max, n));
    std::vector<int> pool(static_cast<std::size_t>(cfg.topic_pool()));
    std::iota(pool.begin(), pool.end(), 0);
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::vector<int> seq = detail::session_sequence(rng, n, k, cfg.burstiness);

    Dialogue d;
    d.dialogue_id = cfg.id_prefix + std::to_string(di);
    for (int i = 0; i < n; ++i) {
      const int session = seq[static_cast<std::size_t>(i)];
      const int topic = pool[static_cast<std::size_t>(session)];
      const bool ambiguous = detail::bernoulli(rng, cfg.ambiguous_rate);
      const int len = detail::uniform_int(rng, cfg.utterance_min, cfg.utterance_max);
      std::string text;
      for (int t = 0; t < len; ++t) {
        if (!text.empty()) text += ' ';
        if (ambiguous || detail::bernoulli(rng, cfg.noise_rate)) {
          text += noise_word(detail::uniform_int(rng, 0, cfg.noise_vocab - 1));
        } else {
          text += topic_word(topic, detail::uniform_int(rng, 0, cfg.vocab_per_session - 1));
        }
      }
      Utterance u;
      u.id = d.dialogue_id + "-" + std::to_string(i);
      u.speaker = "user" + std::to_string(detail::uniform_int(rng, 0, 9));
      u.text = std::move(text);
      u.session = session;
      d.utterances.push_back(std::move(u));
    }
    validate_dialogue(d);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace clucdd
