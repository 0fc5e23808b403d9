// Command-line front end: ingest, train, disentangle, evaluate, ablation
// sweeps and the synthetic corpus generator.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clucdd/corpus.hpp"
#include "clucdd/experiments.hpp"
#include "clucdd/pipeline.hpp"
#include "clucdd/report.hpp"
#include "clucdd/synth.hpp"
#include "clucdd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clucdd;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }
void info(const std::string& msg) { std::cerr << msg << '\n'; }

/// Output goes to `path`, or stdout when the path is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream cell(item);
    T v{};
    if (!(cell >> v) || !cell.eof()) throw ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training configuration: flag > CLUCDD_* environment > config file > default.

struct TrainFlags {
  std::string config_path;
  std::optional<double> learning_rate, margin, gamma, clip_norm;
  std::optional<int> epochs, batch_size, dim, k_max;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> reduction, variant;
  bool freeze_encoder = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON training config")->check(CLI::ExistingFile);
    app->add_option("--lr", learning_rate, "learning rate");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch_size, "dialogues per update");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--margin", margin, "contrastive margin");
    app->add_option("--gamma", gamma, "session-count loss weight");
    app->add_option("--reduction", reduction, "pair-loss reduction")->check(CLI::IsMember({"sum", "mean"}));
    app->add_option("--dim", dim, "model dimension");
    app->add_option("--k-max", k_max, "largest session count the head predicts");
    app->add_option("--variant", variant, "model variant")->check(CLI::IsMember({"full", "no_bilstm", "no_sff"}));
    app->add_option("--clip-norm", clip_norm, "gradient max-norm (0 disables)");
    app->add_flag("--freeze-encoder", freeze_encoder, "keep the token table fixed");
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    std::map<std::string, std::string> source;
    const json defaults = to_json(cfg);
    for (const auto& [key, _] : defaults.items()) source[key] = "default";
    auto mark = [&](const json& j, const char* from) {
      for (const auto& [key, _] : j.items()) source[key] = from;
    };

    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config '" + config_path + "': " + e.what());
      }
      apply_json(cfg, j);
      mark(j, "file");
    }

    json env = json::object();
    for (const auto& [key, _] : defaults.items()) {
      std::string name = "CLUCDD_";
      for (char c : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(name.c_str())) {
        json parsed = json::parse(v, nullptr, false);
        env[key] = parsed.is_discarded() ? json(v) : parsed;
      }
    }
    apply_json(cfg, env);
    mark(env, "env");

    json flags = json::object();
    if (learning_rate) flags["learning_rate"] = *learning_rate;
    if (epochs) flags["epochs"] = *epochs;
    if (batch_size) flags["batch_size"] = *batch_size;
    if (seed) flags["seed"] = *seed;
    if (margin) flags["margin"] = *margin;
    if (gamma) flags["gamma"] = *gamma;
    if (reduction) flags["reduction"] = *reduction;
    if (dim) flags["dim"] = *dim;
    if (k_max) flags["k_max"] = *k_max;
    if (variant) flags["variant"] = *variant;
    if (clip_norm) flags["clip_norm"] = *clip_norm;
    if (freeze_encoder) flags["freeze_encoder"] = true;
    apply_json(cfg, flags);
    mark(flags, "flag");

    cfg.validate();
    json shown = to_json(cfg);
    std::ostringstream log;
    log << "training config:";
    for (const auto& [key, value] : shown.items()) log << ' ' << key << '=' << value.dump() << " (" << source[key] << ')';
    info(log.str());
    return cfg;
  }
};

struct ClusterFlags {
  std::string method = "kmeans";
  std::string k_source = "head";
  std::optional<int> k;
  double eps = 0.5;
  int min_pts = 3;
  double damping = 0.9;
  int max_iter = 200;
  int convergence_window = 15;
  std::uint64_t seed = 0;

  void attach(CLI::App* app, bool with_method) {
    if (with_method) {
      app->add_option("--method", method, "clustering method")
          ->check(CLI::IsMember({"kmeans", "gmm", "dbscan", "ap"}));
    }
    app->add_option("--k-source", k_source, "where k comes from")->check(CLI::IsMember({"gold", "head", "given"}));
    app->add_option("--k", k, "explicit session count for --k-source given");
    app->add_option("--eps", eps, "DBSCAN neighborhood radius");
    app->add_option("--min-pts", min_pts, "DBSCAN core-point threshold");
    app->add_option("--damping", damping, "affinity-propagation damping");
    app->add_option("--max-iter", max_iter, "affinity-propagation iteration cap");
    app->add_option("--convergence-window", convergence_window, "affinity-propagation stable iterations");
    app->add_option("--cluster-seed", seed, "clustering seed");
  }

  DisentangleOptions resolve() const {
    DisentangleOptions o;
    o.method = cluster_method_from_string(method);
    o.k_source = k_source_from_string(k_source);
    o.given_k = k;
    o.eps = eps;
    o.min_pts = min_pts;
    o.ap = {damping, max_iter, convergence_window};
    o.seed = seed;
    if (o.k_source == KSource::given && !k) throw ConfigError("--k-source given requires --k");
    if (k && *k < 1) throw ConfigError("--k must be positive");
    return o;
  }
};

std::optional<EmbeddingMap> maybe_embeddings(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_precomputed(path);
}

const EmbeddingMap* ptr(const std::optional<EmbeddingMap>& m) { return m ? &*m : nullptr; }

std::span<const Dialogue> eval_split(const DataDir& data, bool prefer_test) {
  if (prefer_test && !data.test.empty()) return data.test;
  if (!data.dev.empty()) return data.dev;
  if (!data.test.empty()) return data.test;
  throw ConfigError("data directory needs dev.jsonl or test.jsonl to evaluate on");
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string input, out, format = "auto", split;
  std::optional<int> window;
  std::uint64_t seed = 0;
};

int run_ingest(const IngestArgs& a) {
  const auto records = load_dialogues(a.input);
  std::vector<Dialogue> out;
  std::string detected = a.format;
  for (const auto& rec : records) {
    std::string fmt = a.format;
    if (fmt == "auto") fmt = rec.labeled() ? "session" : "reply";
    if (fmt == "session" && !rec.labeled()) {
      throw ValidationError("record '" + rec.dialogue_id + "' has no session labels");
    }
    if (detected == "auto") detected = fmt;
    if (detected != fmt) detected = "mixed";
    const Dialogue labeled = fmt == "reply" ? label_from_replies(rec) : rec;
    const int window = a.window.value_or(fmt == "reply" ? 50 : 0);
    if (window > 0) {
      for (auto& w : window_dialogues(labeled, static_cast<std::size_t>(window))) out.push_back(std::move(w));
    } else {
      out.push_back(labeled);
    }
  }

  fs::create_directories(a.out);
  json files = json::object();
  if (a.split.empty()) {
    save_dialogues((fs::path(a.out) / "dialogues.jsonl").string(), out);
    files["dialogues"] = out.size();
  } else {
    const auto f = parse_list<double>(a.split, "split");
    if (f.size() != 3) throw ConfigError("--split needs three fractions");
    const auto s = split_corpus(out, {f[0], f[1], f[2]}, a.seed);
    save_dialogues((fs::path(a.out) / "train.jsonl").string(), s.train);
    save_dialogues((fs::path(a.out) / "dev.jsonl").string(), s.dev);
    save_dialogues((fs::path(a.out) / "test.jsonl").string(), s.test);
    files = {{"train", s.train.size()}, {"dev", s.dev.size()}, {"test", s.test.size()}};
  }

  std::map<int, std::size_t> histogram;
  std::size_t utterances = 0;
  for (const auto& d : out) {
    ++histogram[d.labeling().k];
    utterances += d.n();
  }
  json hist = json::object();
  for (const auto& [k, count] : histogram) hist[std::to_string(k)] = count;
  json manifest{{"source", fs::path(a.input).filename().string()},
                {"format", detected == "auto" ? "session" : detected},
                {"window", a.window ? json(*a.window) : json(nullptr)},
                {"records", records.size()},
                {"dialogues", out.size()},
                {"utterances", utterances},
                {"k_histogram", hist},
                {"files", files}};
  std::ofstream((fs::path(a.out) / "manifest.json").string(), std::ios::binary) << manifest.dump(2) << '\n';
  info("ingested " + std::to_string(records.size()) + " records into " + std::to_string(out.size()) + " dialogues");
  return 0;
}

struct TrainArgs {
  std::string data, out, embeddings, log, resume;
  TrainFlags flags;
};

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  DataDir data;
  if (fs::is_directory(a.data)) {
    data = load_data_dir(a.data);
  } else {
    data.train = load_session_labeled(a.data);
  }
  const auto embeddings = maybe_embeddings(a.embeddings);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = load_checkpoint(a.resume);

  const std::string log_path = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw Error("cannot write '" + log_path + "'");

  TrainInputs in;
  in.train = data.train;
  in.dev = data.dev;
  in.precomputed = ptr(embeddings);
  in.resume = resume ? &*resume : nullptr;
  in.on_epoch = [&](const EpochLog& e) {
    log << to_json(e).dump() << '\n';
    std::ostringstream line;
    line << "epoch " << e.epoch << " loss " << e.mean_loss;
    if (e.dev) line << " dev shen_f " << e.dev->shen_f;
    info(line.str());
  };
  const TrainResult r = train(in, cfg);
  save_checkpoint(a.out, r.checkpoint);
  info("wrote " + a.out);
  return 0;
}

struct DisentangleArgs {
  std::string ckpt, data, out, embeddings;
  ClusterFlags cluster;
};

int run_disentangle(const DisentangleArgs& a) {
  const DisentangleOptions opt = a.cluster.resolve();
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const auto dialogues = load_dialogues(a.data);
  const auto embeddings = maybe_embeddings(a.embeddings);
  std::vector<PredictedLabels> rows;
  for (const auto& d : dialogues) {
    const auto e = prepare_dialogue(ck.model, d, ptr(embeddings));
    rows.push_back({d.dialogue_id, disentangle(ck.model, e, opt).labels});
  }
  Output out(a.out);
  write_labels(out.stream(), rows);
  return 0;
}

struct EvaluateArgs {
  std::string gold, pred, out, csv;
};

int run_evaluate(const EvaluateArgs& a) {
  const auto gold = load_session_labeled(a.gold);
  const auto pred = load_labels(a.pred);
  const auto report = evaluate_corpus(match_labels(gold, pred));
  {
    Output out(a.out);
    out.stream() << to_json(report).dump(2) << '\n';
  }
  std::string csv = a.csv;
  if (csv.empty() && !a.out.empty() && a.out != "-") csv = fs::path(a.out).replace_extension(".csv").string();
  if (!csv.empty()) {
    Output c(csv);
    write_report_csv(c.stream(), report);
  }
  return 0;
}

struct SweepArgs {
  std::string data, out, embeddings, grid;
  TrainFlags flags;
  ClusterFlags cluster;
};

int run_sweep_margin(const SweepArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  const DisentangleOptions opt = a.cluster.resolve();
  const DataDir data = load_data_dir(a.data);
  const auto embeddings = maybe_embeddings(a.embeddings);
  std::vector<std::string> warnings;
  const auto rows =
      sweep_margin(data, eval_split(data, false), cfg, parse_list<double>(a.grid, "margin"), opt, &warnings, ptr(embeddings));
  for (const auto& w : warnings) warn(w);
  Output out(a.out);
  write_margin_csv(out.stream(), rows);
  return 0;
}

int run_sweep_sessions(const SweepArgs& a) {
  const TrainConfig cfg = a.flags.resolve();
  const DisentangleOptions opt = a.cluster.resolve();
  const DataDir data = load_data_dir(a.data);
  const auto embeddings = maybe_embeddings(a.embeddings);
  std::vector<std::string> warnings;
  const auto rows =
      sweep_sessions(data, eval_split(data, true), cfg, parse_list<int>(a.grid, "session count"), opt, &warnings, ptr(embeddings));
  for (const auto& w : warnings) warn(w);
  Output out(a.out);
  write_sessions_csv(out.stream(), rows);
  return 0;
}

struct CompareArgs {
  std::string ckpt, data, out, embeddings;
  ClusterFlags cluster;
};

int run_compare(const CompareArgs& a) {
  const DisentangleOptions opt = a.cluster.resolve();
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const auto dialogues = load_session_labeled(a.data);
  const auto embeddings = maybe_embeddings(a.embeddings);
  const auto encoded = prepare_all(ck.model, dialogues, ptr(embeddings));
  const auto rows = compare_clustering(ck.model, encoded, opt);
  Output out(a.out);
  write_methods_csv(out.stream(), rows);
  return 0;
}

int run_synth(const SynthConfig& cfg, const std::string& out_path) {
  const auto dialogues = synthesize(cfg);
  Output out(out_path);
  write_dialogues(out.stream(), dialogues);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialogue disentanglement: contrastive utterance representations and session clustering"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "canonicalize, window and split a chat corpus");
  c_ingest->add_option("--input", ingest.input, "line-delimited dialogue records")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--out", ingest.out, "output directory")->required();
  c_ingest->add_option("--format", ingest.format, "annotation style")->check(CLI::IsMember({"auto", "session", "reply"}));
  c_ingest->add_option("--window", ingest.window, "utterances per dialogue (default 50 for reply logs, 0 = keep)");
  c_ingest->add_option("--split", ingest.split, "train,dev,test fractions, e.g. 0.8,0.1,0.1");
  c_ingest->add_option("--seed", ingest.seed, "split seed");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model");
  c_train->add_option("--data", tr.data, "directory with train.jsonl [dev.jsonl], or a single file")
      ->required()
      ->check(CLI::ExistingPath);
  c_train->add_option("--out", tr.out, "checkpoint path")->required();
  c_train->add_option("--embeddings", tr.embeddings, "precomputed utterance vectors")->check(CLI::ExistingFile);
  c_train->add_option("--log", tr.log, "per-epoch JSON lines (default <out>.log.jsonl)");
  c_train->add_option("--resume", tr.resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  tr.flags.attach(c_train);

  DisentangleArgs dis;
  auto* c_dis = app.add_subcommand("disentangle", "predict session labels");
  c_dis->add_option("--ckpt", dis.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_dis->add_option("--data", dis.data, "dialogue records")->required()->check(CLI::ExistingFile);
  c_dis->add_option("--out", dis.out, "label records (default stdout)");
  c_dis->add_option("--embeddings", dis.embeddings, "precomputed utterance vectors")->check(CLI::ExistingFile);
  dis.cluster.attach(c_dis, true);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "score predicted labels");
  c_eval->add_option("--gold", ev.gold, "gold dialogue records")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--pred", ev.pred, "predicted label records")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out, "report JSON (default stdout)");
  c_eval->add_option("--csv", ev.csv, "per-dialogue CSV (default: report path with .csv)");

  SweepArgs sm;
  sm.grid = "0.5,0.75,1.0,1.25";
  auto* c_sm = app.add_subcommand("sweep-margin", "metrics versus contrastive margin");
  c_sm->add_option("--data", sm.data, "data directory")->required()->check(CLI::ExistingDirectory);
  c_sm->add_option("--margins", sm.grid, "comma-separated margins");
  c_sm->add_option("--out", sm.out, "CSV output (default stdout)");
  c_sm->add_option("--embeddings", sm.embeddings, "precomputed utterance vectors")->check(CLI::ExistingFile);
  sm.flags.attach(c_sm);
  sm.cluster.attach(c_sm, true);

  SweepArgs ss;
  ss.grid = "2,3,4";
  auto* c_ss = app.add_subcommand("sweep-sessions", "Shen-F per gold session count");
  c_ss->add_option("--data", ss.data, "data directory")->required()->check(CLI::ExistingDirectory);
  c_ss->add_option("--sessions", ss.grid, "comma-separated session counts");
  c_ss->add_option("--out", ss.out, "CSV output (default stdout)");
  c_ss->add_option("--embeddings", ss.embeddings, "precomputed utterance vectors")->check(CLI::ExistingFile);
  ss.flags.attach(c_ss);
  ss.cluster.attach(c_ss, true);

  CompareArgs cmp;
  auto* c_cmp = app.add_subcommand("compare-clustering", "k-means / GMM / DBSCAN / AP on one checkpoint");
  c_cmp->add_option("--ckpt", cmp.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--data", cmp.data, "labeled dialogue records")->required()->check(CLI::ExistingFile);
  c_cmp->add_option("--out", cmp.out, "CSV output (default stdout)");
  c_cmp->add_option("--embeddings", cmp.embeddings, "precomputed utterance vectors")->check(CLI::ExistingFile);
  cmp.cluster.attach(c_cmp, false);

  SynthConfig syn;
  std::string syn_out;
  auto* c_syn = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  c_syn->add_option("--dialogues", syn.dialogues, "number of dialogues");
  c_syn->add_option("--n-min", syn.n_min, "minimum utterances per dialogue");
  c_syn->add_option("--n-max", syn.n_max, "maximum utterances per dialogue");
  c_syn->add_option("--k-min", syn.k_min, "minimum sessions per dialogue");
  c_syn->add_option("--k-max", syn.k_max, "maximum sessions per dialogue");
  c_syn->add_option("--vocab-per-session", syn.vocab_per_session, "content words per session topic");
  c_syn->add_option("--noise-rate", syn.noise_rate, "probability a token is a shared noise word");
  c_syn->add_option("--seed", syn.seed, "random seed");
  c_syn->add_option("--topics", syn.topics, "topic pool size (default k-max)");
  c_syn->add_option("--noise-vocab", syn.noise_vocab, "shared noise words");
  c_syn->add_option("--utterance-min", syn.utterance_min, "minimum tokens per utterance");
  c_syn->add_option("--utterance-max", syn.utterance_max, "maximum tokens per utterance");
  c_syn->add_option("--burstiness", syn.burstiness, "probability of staying in the current session");
  c_syn->add_option("--ambiguous-rate", syn.ambiguous_rate, "probability of a noise-only utterance");
  c_syn->add_option("--prefix", syn.id_prefix, "dialogue id prefix");
  c_syn->add_option("--out", syn_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*c_ingest) return run_ingest(ingest);
    if (*c_train) return run_train(tr);
    if (*c_dis) return run_disentangle(dis);
    if (*c_eval) return run_evaluate(ev);
    if (*c_sm) return run_sweep_margin(sm);
    if (*c_ss) return run_sweep_sessions(ss);
    if (*c_cmp) return run_compare(cmp);
    if (*c_syn) return run_synth(syn, syn_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
