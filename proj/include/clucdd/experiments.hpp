#pragma once

// Ablation drivers: margin sweep, per-session-count subsets and the
// clustering-method comparison, with their CSV layouts.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "clucdd/pipeline.hpp"
#include "clucdd/report.hpp"
#include "clucdd/trainer.hpp"

namespace clucdd {

/// train.jsonl is required; dev.jsonl and test.jsonl are optional.
struct DataDir {
  std::vector<Dialogue> train, dev, test;
};

inline DataDir load_data_dir(const std::filesystem::path& dir) {
  DataDir d;
  auto optional_file = [&](const char* name) {
    const auto p = dir / name;
    return std::filesystem::exists(p) ? load_session_labeled(p.string()) : std::vector<Dialogue>{};
  };
  const auto train_path = dir / "train.jsonl";
  if (!std::filesystem::exists(train_path)) throw ConfigError("'" + dir.string() + "' has no train.jsonl");
  d.train = load_session_labeled(train_path.string());
  d.dev = optional_file("dev.jsonl");
  d.test = optional_file("test.jsonl");
  return d;
}

inline std::vector<EncodedDialogue> prepare_all(const Model& model, std::span<const Dialogue> dialogues,
                                                const EmbeddingMap* precomputed = nullptr) {
  std::vector<EncodedDialogue> out;
  out.reserve(dialogues.size());
  for (const auto& d : dialogues) out.push_back(prepare_dialogue(model, d, precomputed));
  return out;
}

/// Trains on `train` and scores `eval` with the given disentangling options.
inline MetricValues train_and_score(std::span<const Dialogue> train_set, std::span<const Dialogue> dev,
                                    std::span<const Dialogue> eval, const TrainConfig& cfg,
                                    const DisentangleOptions& opt, const EmbeddingMap* precomputed = nullptr) {
  TrainInputs in;
  in.train = train_set;
  in.dev = dev;
  in.precomputed = precomputed;
  const TrainResult r = train(in, cfg);
  const auto encoded = prepare_all(r.checkpoint.model, eval, precomputed);
  return score_dialogues(r.checkpoint.model, encoded, opt).corpus;
}

struct MarginRow {
  double margin = 0.0;
  MetricValues metrics;
};

/// Sorted ascending, duplicates dropped (reported through `warnings`).
inline std::vector<double> normalize_margin_grid(std::vector<double> grid, std::vector<std::string>* warnings) {
  if (grid.empty()) throw ConfigError("margin grid is empty");
  std::sort(grid.begin(), grid.end());
  const auto last = std::unique(grid.begin(), grid.end());
  if (last != grid.end() && warnings) warnings->push_back("duplicate margins in grid were removed");
  grid.erase(last, grid.end());
  for (double m : grid) {
    if (!(m > 0.0)) throw ConfigError("margins must be positive");
  }
  return grid;
}

/// One model per margin (same seed), each scored on `eval`.
inline std::vector<MarginRow> sweep_margin(const DataDir& data, std::span<const Dialogue> eval, TrainConfig cfg,
                                           std::vector<double> grid, const DisentangleOptions& opt,
                                           std::vector<std::string>* warnings = nullptr,
                                           const EmbeddingMap* precomputed = nullptr) {
  grid = normalize_margin_grid(std::move(grid), warnings);
  std::vector<MarginRow> rows;
  for (double m : grid) {
    cfg.contrastive.margin = m;
    rows.push_back({m, train_and_score(data.train, {}, eval, cfg, opt, precomputed)});
  }
  return rows;
}

inline void write_margin_csv(std::ostream& out, std::span<const MarginRow> rows) {
  out << "margin,nmi,ari,loc3,one_to_one,shen_f\n";
  for (const auto& r : rows) {
    out << csv_number(r.margin) << ',' << csv_number(r.metrics.nmi) << ',' << csv_number(r.metrics.ari) << ','
        << csv_number(r.metrics.loc3) << ',' << csv_number(r.metrics.one_to_one) << ','
        << csv_number(r.metrics.shen_f) << '\n';
  }
}

struct SessionSubsetRow {
  int sessions = 0;
  std::size_t train_dialogues = 0;
  std::size_t eval_dialogues = 0;
  std::optional<double> shen_f;  // empty when either subset is empty
};

/// Splits train and eval by gold session count and trains one model per count.
inline std::vector<SessionSubsetRow> sweep_sessions(const DataDir& data, std::span<const Dialogue> eval,
                                                    const TrainConfig& cfg, std::vector<int> counts,
                                                    const DisentangleOptions& opt,
                                                    std::vector<std::string>* warnings = nullptr,
                                                    const EmbeddingMap* precomputed = nullptr) {
  if (counts.empty()) throw ConfigError("session-count grid is empty");
  std::sort(counts.begin(), counts.end());
  counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
  auto subset = [](std::span<const Dialogue> ds, int k) {
    std::vector<Dialogue> out;
    for (const auto& d : ds) {
      if (d.labeling().k == k) out.push_back(d);
    }
    return out;
  };
  std::vector<SessionSubsetRow> rows;
  for (int k : counts) {
    SessionSubsetRow row;
    row.sessions = k;
    const auto tr = subset(data.train, k);
    const auto dv = subset(data.dev, k);
    const auto ev = subset(eval, k);
    row.train_dialogues = tr.size();
    row.eval_dialogues = ev.size();
    if (tr.empty() || ev.empty()) {
      if (warnings) warnings->push_back("no dialogues with " + std::to_string(k) + " sessions; row left empty");
    } else {
      row.shen_f = train_and_score(tr, dv, ev, cfg, opt, precomputed).shen_f;
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_sessions_csv(std::ostream& out, std::span<const SessionSubsetRow> rows) {
  out << "sessions,train_dialogues,eval_dialogues,shen_f\n";
  for (const auto& r : rows) {
    out << r.sessions << ',' << r.train_dialogues << ',' << r.eval_dialogues << ','
        << (r.shen_f ? csv_number(*r.shen_f) : std::string()) << '\n';
  }
}

struct MethodRow {
  ClusterMethod method = ClusterMethod::kmeans;
  MetricValues metrics;
  DisentangleOptions options;
};

/// Scores every clustering method with one shared model.
inline std::vector<MethodRow> compare_clustering(const Model& model, std::span<const EncodedDialogue> eval,
                                                 const DisentangleOptions& base) {
  std::vector<MethodRow> rows;
  for (auto m : {ClusterMethod::kmeans, ClusterMethod::gmm, ClusterMethod::dbscan, ClusterMethod::ap}) {
    DisentangleOptions opt = base;
    opt.method = m;
    rows.push_back({m, score_dialogues(model, eval, opt).corpus, opt});
  }
  return rows;
}

inline void write_methods_csv(std::ostream& out, std::span<const MethodRow> rows) {
  out << "method,nmi,ari,loc3,shen_f,k_source,restarts,eps,min_pts,damping,max_iter,convergence_window\n";
  for (const auto& r : rows) {
    const auto& o = r.options;
    out << to_string(r.method) << ',' << csv_number(r.metrics.nmi) << ',' << csv_number(r.metrics.ari) << ','
        << csv_number(r.metrics.loc3) << ',' << csv_number(r.metrics.shen_f) << ',';
    switch (r.method) {
      case ClusterMethod::kmeans:
      case ClusterMethod::gmm:
        out << to_string(o.k_source) << ',' << o.kmeans.restarts << ",,,,,\n";
        break;
      case ClusterMethod::dbscan:
        out << ",," << csv_number(o.eps) << ',' << o.min_pts << ",,,\n";
        break;
      case ClusterMethod::ap:
        out << ",,,," << csv_number(o.ap.damping) << ',' << o.ap.max_iter << ',' << o.ap.convergence_window << '\n';
        break;
    }
  }
}

}  // namespace clucdd
