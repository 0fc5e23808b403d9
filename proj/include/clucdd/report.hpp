#pragma once

// Label files, metric reports and CSV emission.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "clucdd/corpus.hpp"
#include "clucdd/error.hpp"
#include "clucdd/metrics.hpp"

namespace clucdd {

struct PredictedLabels {
  std::string dialogue_id;
  std::vector<int> labels;
};

inline void write_labels(std::ostream& out, std::span<const PredictedLabels> rows) {
  for (const auto& r : rows) {
    out << nlohmann::json{{"dialogue_id", r.dialogue_id}, {"labels", r.labels}}.dump() << '\n';
  }
}

/// Reads line-delimited {"dialogue_id": str, "labels": [int]} records.
inline std::vector<PredictedLabels> read_labels(std::istream& in) {
  std::vector<PredictedLabels> out;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line);
    }
    if (!rec.is_object() || !rec.contains("dialogue_id") || !rec["dialogue_id"].is_string() ||
        !rec.contains("labels") || !rec["labels"].is_array()) {
      throw ParseError("label record needs 'dialogue_id' and 'labels'", line);
    }
    PredictedLabels p;
    p.dialogue_id = rec["dialogue_id"].get<std::string>();
    for (const auto& v : rec["labels"]) {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ParseError("labels must be non-negative integers", line);
      p.labels.push_back(v.get<int>());
    }
    if (!seen.insert(p.dialogue_id).second) {
      throw ValidationError("labels for dialogue '" + p.dialogue_id + "' appear twice");
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<PredictedLabels> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_labels(in);
}

/// Pairs gold dialogues with predictions by dialogue id, in gold order.
inline std::vector<LabelPair> match_labels(std::span<const Dialogue> gold, std::span<const PredictedLabels> pred) {
  std::unordered_map<std::string, const PredictedLabels*> by_id;
  for (const auto& p : pred) by_id.emplace(p.dialogue_id, &p);
  std::vector<LabelPair> pairs;
  for (const auto& d : gold) {
    auto it = by_id.find(d.dialogue_id);
    if (it == by_id.end()) throw ValidationError("no prediction for dialogue '" + d.dialogue_id + "'");
    pairs.push_back({d.dialogue_id, d.labeling().labels, it->second->labels});
  }
  if (pairs.size() != pred.size()) throw ValidationError("predictions name dialogues that are not in the gold file");
  return pairs;
}

inline nlohmann::json to_json(const MetricValues& m) {
  return {{"nmi", m.nmi}, {"ari", m.ari}, {"loc3", m.loc3}, {"one_to_one", m.one_to_one}, {"shen_f", m.shen_f}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [id, m] : r.per_dialogue) {
    nlohmann::json row = to_json(m);
    row["dialogue_id"] = id;
    rows.push_back(std::move(row));
  }
  return {{"corpus", to_json(r.corpus)}, {"per_dialogue", std::move(rows)}};
}

/// Fixed-precision number for CSV cells.
inline std::string csv_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Quotes a CSV cell when it contains a separator, quote or newline.
inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_report_csv(std::ostream& out, const MetricReport& r) {
  out << "dialogue_id,nmi,ari,loc3,one_to_one,shen_f\n";
  auto row = [&](const std::string& id, const MetricValues& m) {
    out << csv_cell(id) << ',' << csv_number(m.nmi) << ',' << csv_number(m.ari) << ',' << csv_number(m.loc3) << ','
        << csv_number(m.one_to_one) << ',' << csv_number(m.shen_f) << '\n';
  };
  for (const auto& [id, m] : r.per_dialogue) row(id, m);
  row("corpus", r.corpus);
}

}  // namespace clucdd
