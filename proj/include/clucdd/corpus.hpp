#pragma once

// Chat corpora: dialogue records, session labelings, reply graphs,
// fixed-length windowing and seeded splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clucdd/error.hpp"

namespace clucdd {

using Json = nlohmann::json;

/// A per-utterance session assignment with labels 0..k-1 in order of first
/// appearance.
struct SessionLabeling {
  std::vector<int> labels;
  int k = 0;

  std::size_t size() const noexcept { return labels.size(); }

  /// Session sizes m_0..m_{k-1}.
  std::vector<int> counts() const {
    std::vector<int> m(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++m[static_cast<std::size_t>(l)];
    return m;
  }

  friend bool operator==(const SessionLabeling&, const SessionLabeling&) = default;
};

/// Relabels arbitrary integer ids by order of first appearance.
template <typename Label>
SessionLabeling canonicalize(std::span<const Label> raw) {
  SessionLabeling out;
  out.labels.reserve(raw.size());
  std::map<Label, int> seen;
  for (const Label& l : raw) {
    auto [it, inserted] = seen.try_emplace(l, out.k);
    if (inserted) ++out.k;
    out.labels.push_back(it->second);
  }
  return out;
}

inline SessionLabeling canonicalize(const std::vector<int>& raw) {
  return canonicalize(std::span<const int>(raw));
}

inline bool is_canonical(const SessionLabeling& s) {
  int next = 0;
  for (int l : s.labels) {
    if (l < 0 || l > next) return false;
    if (l == next) ++next;
  }
  return next == s.k;
}

struct Utterance {
  std::string id;
  std::string speaker;
  std::string text;
  std::optional<int> session;
  std::optional<std::vector<std::string>> reply_to;
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<Utterance> utterances;

  std::size_t n() const noexcept { return utterances.size(); }

  bool labeled() const noexcept {
    return !utterances.empty() && utterances.front().session.has_value();
  }

  SessionLabeling labeling() const {
    if (!labeled()) throw ValidationError("dialogue '" + dialogue_id + "' has no session labels");
    std::vector<int> raw;
    raw.reserve(n());
    for (const auto& u : utterances) raw.push_back(*u.session);
    return canonicalize(raw);
  }

  void set_labels(const SessionLabeling& s) {
    if (s.size() != n()) throw ValidationError("labeling length does not match dialogue '" + dialogue_id + "'");
    for (std::size_t i = 0; i < n(); ++i) utterances[i].session = s.labels[i];
  }
};

/// Edges point from a child utterance to the earlier utterance it answers.
struct ReplyGraph {
  std::vector<std::string> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
};

/// Checks the record-level invariants and canonicalizes session labels.
inline void validate_dialogue(Dialogue& d) {
  if (d.n() < 2) {
    throw ValidationError("dialogue '" + d.dialogue_id + "' has fewer than 2 utterances");
  }
  std::unordered_set<std::string> ids;
  std::size_t with_label = 0;
  for (const auto& u : d.utterances) {
    if (!ids.insert(u.id).second) {
      throw ValidationError("dialogue '" + d.dialogue_id + "' repeats utterance id '" + u.id + "'");
    }
    if (u.session) {
      if (*u.session < 0) {
        throw ValidationError("dialogue '" + d.dialogue_id + "' has a negative session label");
      }
      ++with_label;
    }
  }
  if (with_label != 0 && with_label != d.n()) {
    throw ValidationError("dialogue '" + d.dialogue_id + "' is partially labeled");
  }
  if (with_label != 0) d.set_labels(d.labeling());
}

namespace detail {

inline const Json& require(const Json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing key '") + key + "'", line);
  return *it;
}

inline std::string require_string(const Json& obj, const char* key, std::size_t line) {
  const Json& v = require(obj, key, line);
  if (!v.is_string()) throw ParseError(std::string("'") + key + "' must be a string", line);
  return v.get<std::string>();
}

}  // namespace detail

inline Dialogue dialogue_from_json(const Json& rec, std::size_t line) {
  if (!rec.is_object()) throw ParseError("record is not a JSON object", line);
  Dialogue d;
  d.dialogue_id = detail::require_string(rec, "dialogue_id", line);
  const Json& utts = detail::require(rec, "utterances", line);
  if (!utts.is_array()) throw ParseError("'utterances' must be an array", line);
  for (const Json& uj : utts) {
    if (!uj.is_object()) throw ParseError("utterance is not a JSON object", line);
    Utterance u;
    u.id = detail::require_string(uj, "id", line);
    u.speaker = uj.contains("speaker") && !uj["speaker"].is_null()
                    ? detail::require_string(uj, "speaker", line)
                    : std::string();
    u.text = detail::require_string(uj, "text", line);
    if (auto it = uj.find("session"); it != uj.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw ParseError("'session' must be an integer or null", line);
      u.session = it->get<int>();
    }
    if (auto it = uj.find("reply_to"); it != uj.end() && !it->is_null()) {
      if (!it->is_array()) throw ParseError("'reply_to' must be an array or null", line);
      std::vector<std::string> parents;
      for (const Json& p : *it) {
        if (!p.is_string()) throw ParseError("'reply_to' entries must be strings", line);
        parents.push_back(p.get<std::string>());
      }
      u.reply_to = std::move(parents);
    }
    d.utterances.push_back(std::move(u));
  }
  return d;
}

inline Json dialogue_to_json(const Dialogue& d) {
  Json utts = Json::array();
  for (const auto& u : d.utterances) {
    Json uj;
    uj["id"] = u.id;
    uj["speaker"] = u.speaker;
    uj["text"] = u.text;
    uj["session"] = u.session ? Json(*u.session) : Json(nullptr);
    uj["reply_to"] = u.reply_to ? Json(*u.reply_to) : Json(nullptr);
    utts.push_back(std::move(uj));
  }
  return Json{{"dialogue_id", d.dialogue_id}, {"utterances", std::move(utts)}};
}

/// Reads line-delimited dialogue records. Blank lines are skipped. Records are
/// validated (n >= 2, unique ids, all-or-nothing labels) and canonicalized.
inline std::vector<Dialogue> read_dialogues(std::istream& in) {
  std::vector<Dialogue> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json rec;
    try {
      rec = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ParseError(e.what(), line);
    }
    Dialogue d = dialogue_from_json(rec, line);
    validate_dialogue(d);
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<Dialogue> load_dialogues(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_dialogues(in);
}

/// Like load_dialogues but every dialogue must carry session labels.
inline std::vector<Dialogue> load_session_labeled(const std::string& path) {
  auto dialogues = load_dialogues(path);
  for (const auto& d : dialogues) {
    if (!d.labeled()) throw ValidationError("dialogue '" + d.dialogue_id + "' has no session labels");
  }
  return dialogues;
}

inline void write_dialogues(std::ostream& out, std::span<const Dialogue> dialogues) {
  for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

inline void save_dialogues(const std::string& path, std::span<const Dialogue> dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  write_dialogues(out, dialogues);
}

inline ReplyGraph reply_graph_of(const Dialogue& log) {
  ReplyGraph g;
  for (const auto& u : log.utterances) {
    g.nodes.push_back(u.id);
    if (u.reply_to) {
      for (const auto& p : *u.reply_to) g.edges.emplace_back(u.id, p);
    }
  }
  return g;
}

/// Connected components of the reply graph (edges undirected), labeled by
/// first appearance in `node_order`.
inline SessionLabeling reply_graph_to_sessions(const ReplyGraph& graph,
                                               std::span<const std::string> node_order) {
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (!position.emplace(graph.nodes[i], i).second) {
      throw ValidationError("duplicate reply-graph node '" + graph.nodes[i] + "'");
    }
  }

  std::vector<std::size_t> parent(graph.nodes.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  for (const auto& [child, target] : graph.edges) {
    auto c = position.find(child);
    auto p = position.find(target);
    if (c == position.end() || p == position.end()) {
      throw ValidationError("reply edge " + child + " -> " + target + " references an unknown utterance");
    }
    if (p->second > c->second) {
      throw ValidationError("reply edge " + child + " -> " + target + " points to a later utterance");
    }
    std::size_t a = find(c->second), b = find(p->second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  std::vector<std::size_t> roots;
  roots.reserve(node_order.size());
  for (const auto& id : node_order) {
    auto it = position.find(id);
    if (it == position.end()) throw ValidationError("node order names unknown utterance '" + id + "'");
    roots.push_back(find(it->second));
  }
  return canonicalize(std::span<const std::size_t>(roots));
}

/// Assigns session labels to a reply-annotated log from its reply graph.
inline Dialogue label_from_replies(Dialogue log) {
  ReplyGraph g = reply_graph_of(log);
  log.set_labels(reply_graph_to_sessions(g, g.nodes));
  return log;
}

/// Cuts a labeled log into consecutive non-overlapping windows of exactly
/// `window` utterances. The trailing remainder and single-session windows are
/// dropped; labels are re-canonicalized per window and reply edges leaving a
/// window are removed.
inline std::vector<Dialogue> window_dialogues(const Dialogue& log, std::size_t window = 50) {
  if (window < 2) throw ConfigError("window must be at least 2 utterances");
  if (!log.labeled()) throw ValidationError("log '" + log.dialogue_id + "' has no session labels");
  std::vector<Dialogue> out;
  for (std::size_t start = 0, w = 0; start + window <= log.n(); start += window, ++w) {
    Dialogue d;
    d.dialogue_id = log.dialogue_id + "#" + std::to_string(w);
    d.utterances.assign(log.utterances.begin() + static_cast<std::ptrdiff_t>(start),
                        log.utterances.begin() + static_cast<std::ptrdiff_t>(start + window));
    std::unordered_set<std::string> inside;
    for (const auto& u : d.utterances) inside.insert(u.id);
    for (auto& u : d.utterances) {
      if (!u.reply_to) continue;
      std::erase_if(*u.reply_to, [&](const std::string& p) { return !inside.contains(p); });
    }
    SessionLabeling s = d.labeling();
    if (s.k < 2) continue;
    d.set_labels(s);
    out.push_back(std::move(d));
  }
  return out;
}

struct CorpusSplit {
  std::vector<Dialogue> train, dev, test;
};

/// Seeded shuffle then cut into train/dev/test by the given fractions.
inline CorpusSplit split_corpus(std::span<const Dialogue> dialogues, std::array<double, 3> fractions,
                                std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  std::vector<std::size_t> order(dialogues.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto total = static_cast<double>(dialogues.size());
  auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * total));
  auto n_dev = static_cast<std::size_t>(std::llround(fractions[1] * total));
  n_train = std::min(n_train, dialogues.size());
  n_dev = std::min(n_dev, dialogues.size() - n_train);

  CorpusSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Dialogue& d = dialogues[order[i]];
    if (i < n_train) {
      split.train.push_back(d);
    } else if (i < n_train + n_dev) {
      split.dev.push_back(d);
    } else {
      split.test.push_back(d);
    }
  }
  return split;
}

}  // namespace clucdd
