#pragma once

// Adam training over whole dialogues, best-dev retention and binary
// checkpoints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clucdd/binary_io.hpp"
#include "clucdd/model.hpp"
#include "clucdd/pipeline.hpp"

namespace clucdd {

struct TrainConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 10;
  int batch_size = 4;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
  ContrastiveConfig contrastive;
  int dim = 768;
  int k_max = 4;
  SffVariant variant = SffVariant::full;
  double clip_norm = 0.0;  // 0 disables clipping

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (dim < 2 || dim % 2 != 0) throw ConfigError("dim must be even and at least 2");
    if (k_max < 2) throw ConfigError("k_max must be at least 2");
    if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
    contrastive.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"freeze_encoder", c.freeze_encoder},
          {"margin", c.contrastive.margin},
          {"gamma", c.contrastive.gamma},
          {"reduction", to_string(c.contrastive.reduction)},
          {"dim", c.dim},
          {"k_max", c.k_max},
          {"variant", to_string(c.variant)},
          {"clip_norm", c.clip_norm}};
}

/// Overlays the keys present in `j` onto `c`. Unknown keys are rejected.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "freeze_encoder") c.freeze_encoder = value.get<bool>();
      else if (key == "margin") c.contrastive.margin = value.get<double>();
      else if (key == "gamma") c.contrastive.gamma = value.get<double>();
      else if (key == "reduction") c.contrastive.reduction = reduction_from_string(value.get<std::string>());
      else if (key == "dim") c.dim = value.get<int>();
      else if (key == "k_max") c.k_max = value.get<int>();
      else if (key == "variant") c.variant = sff_variant_from_string(value.get<std::string>());
      else if (key == "clip_norm") c.clip_norm = value.get<double>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config value: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline std::uint64_t config_hash(const TrainConfig& c) { return binary::fnv1a(to_json(c).dump()); }

/// First and second moments per tensor, in checkpoint tensor order. Frozen
/// tensors keep empty moment arrays.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Eigen::ArrayXd> first, second;

  friend bool operator==(const AdamState& a, const AdamState& b) {
    if (a.step != b.step || a.first.size() != b.first.size()) return false;
    for (std::size_t i = 0; i < a.first.size(); ++i) {
      if (a.first[i].size() != b.first[i].size() || (a.first[i] != b.first[i]).any() ||
          (a.second[i] != b.second[i]).any()) {
        return false;
      }
    }
    return true;
  }
};

inline bool is_frozen(const char* tensor, const TrainConfig& c) {
  return c.freeze_encoder && std::string_view(tensor) == "encoder.table";
}

inline AdamState make_adam_state(const Model& model, const TrainConfig& c) {
  AdamState s;
  model.visit([&](const char* name, const auto& t) {
    const Eigen::Index size = is_frozen(name, c) ? 0 : t.size();
    s.first.push_back(Eigen::ArrayXd::Zero(size));
    s.second.push_back(Eigen::ArrayXd::Zero(size));
  });
  return s;
}

/// One bias-corrected Adam update on a flat tensor. `t` is the 1-based step.
inline void adam_update(double* param, const double* grad, Eigen::Index size, Eigen::ArrayXd& m,
                        Eigen::ArrayXd& v, std::uint64_t t, const TrainConfig& c) {
  const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (Eigen::Index i = 0; i < size; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    param[i] -= c.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + c.adam_epsilon);
  }
}

/// Applies one Adam step to every non-frozen tensor. Gradients are checked for
/// finiteness before anything is modified.
inline void adam_step(Model& model, const ModelGradients& grads, AdamState& state, const TrainConfig& c) {
  std::vector<std::pair<const double*, Eigen::Index>> g;
  grads.visit([&](const char* name, const auto& t) {
    if (!is_frozen(name, c) && !t.allFinite()) {
      throw TrainingError(std::string("non-finite gradient in tensor ") + name);
    }
    g.emplace_back(t.data(), t.size());
  });
  const std::uint64_t t = ++state.step;
  std::size_t i = 0;
  model.visit([&](const char* name, auto& p) {
    const auto [grad, size] = g[i];
    auto& m = state.first[i];
    auto& v = state.second[i];
    ++i;
    if (is_frozen(name, c) || p.size() == 0) return;
    if (size != p.size() || m.size() != p.size()) {
      throw std::logic_error(std::string("adam_step: shape mismatch in ") + name);
    }
    adam_update(p.data(), grad, size, m, v, t, c);
  });
}

inline double gradient_norm(const ModelGradients& g) {
  double s = 0.0;
  g.visit([&](const char*, const auto& t) { s += t.squaredNorm(); });
  return std::sqrt(s);
}

/// Model plus optimizer state: everything needed to resume training.
struct Checkpoint {
  Model model;
  AdamState adam;
  std::uint64_t config_hash = 0;
  bool freeze_encoder = false;
};

/*
 * Checkpoint layout (all integers and floats little-endian):
 *
 *   u32 magic 'CLCK'   u32 version   u32 d   u32 V   u32 flags
 *   u32 k_max          u32 variant   u64 step        u64 config hash
 *   V x { u32 byte length, token bytes }            vocabulary, by index
 *   16 x { u32 rows, u32 cols, rows*cols f64 }      tensors, column-major,
 *                                                   in for_each_tensor order
 *   if flags & kHasMoments:
 *     16 x { u32 size, size f64 first moment, size f64 second moment }
 *
 * flags: bit 0 token table present, bit 1 moments present, bit 2 encoder
 * frozen. V is 0 for models fed with precomputed utterance vectors.
 */
inline constexpr std::uint32_t kCheckpointMagic = binary::fourcc('C', 'L', 'C', 'K');
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kHasTable = 1u << 0;
inline constexpr std::uint32_t kHasMoments = 1u << 1;
inline constexpr std::uint32_t kEncoderFrozen = 1u << 2;
inline constexpr std::uint32_t kTensorCount = 16;

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  using namespace binary;
  const Model& m = ck.model;
  std::uint32_t flags = kHasMoments;
  if (m.uses_table()) flags |= kHasTable;
  if (ck.freeze_encoder) flags |= kEncoderFrozen;
  put_u32(out, kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(m.shape.dim));
  put_u32(out, static_cast<std::uint32_t>(m.vocab.size()));
  put_u32(out, flags);
  put_u32(out, static_cast<std::uint32_t>(m.shape.k_max));
  put_u32(out, static_cast<std::uint32_t>(m.shape.variant));
  put_u64(out, ck.adam.step);
  put_u64(out, ck.config_hash);
  for (const auto& tok : m.vocab.tokens) {
    put_u32(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
  }
  m.visit([&](const char*, const auto& t) {
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) put_f64(out, t.data()[i]);
  });
  for (std::size_t i = 0; i < ck.adam.first.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(ck.adam.first[i].size()));
    for (Eigen::Index j = 0; j < ck.adam.first[i].size(); ++j) put_f64(out, ck.adam.first[i][j]);
    for (Eigen::Index j = 0; j < ck.adam.second[i].size(); ++j) put_f64(out, ck.adam.second[i][j]);
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ostringstream buf(std::ios::binary);
  write_checkpoint(buf, ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  using namespace binary;
  if (get_u32(in, "magic") != kCheckpointMagic) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  Model& m = ck.model;
  const auto dim = get_u32(in, "dimension");
  const auto vocab_size = get_u32(in, "vocabulary size");
  const auto flags = get_u32(in, "flags");
  const auto k_max = get_u32(in, "k_max");
  const auto variant = get_u32(in, "variant");
  ck.adam.step = get_u64(in, "step");
  ck.config_hash = get_u64(in, "config hash");
  if (dim == 0 || dim % 2 != 0 || dim > (1u << 20)) throw FormatError("corrupt checkpoint header: dimension");
  if (k_max < 2 || k_max > (1u << 16)) throw FormatError("corrupt checkpoint header: k_max");
  if (variant > static_cast<std::uint32_t>(SffVariant::no_sff)) throw FormatError("corrupt checkpoint header: variant");
  if (((flags & kHasTable) != 0) != (vocab_size > 0)) throw FormatError("corrupt checkpoint header: flags");
  ck.freeze_encoder = (flags & kEncoderFrozen) != 0;
  m.shape = {static_cast<int>(dim), static_cast<int>(k_max), static_cast<SffVariant>(variant)};

  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    const auto len = get_u32(in, "token length");
    if (len > (1u << 20)) throw FormatError("corrupt checkpoint: token length");
    std::string tok(len, '\0');
    in.read(tok.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("truncated file while reading token");
    m.vocab.add(tok);
  }
  if (static_cast<std::uint32_t>(m.vocab.size()) != vocab_size) throw FormatError("checkpoint vocabulary repeats a token");
  if (vocab_size > 0) {
    const int unk = m.vocab.lookup(TokenVocabulary::kUnknownToken);
    if (m.vocab.tokens[static_cast<std::size_t>(unk)] != TokenVocabulary::kUnknownToken) {
      throw FormatError("checkpoint vocabulary has no <unk> token");
    }
    m.vocab.unknown = unk;
  }

  // Expected shapes come from a zero-initialized model of the same layout.
  m.vocab.table = Matrix::Zero(vocab_size, vocab_size > 0 ? dim : 0);
  m.sff = SffParams::zeros(dim, m.shape.variant);
  m.head = ClusterHeadParams::zeros(dim, m.shape.k_max);
  m.visit([&](const char* name, auto& t) {
    const auto rows = get_u32(in, name);
    const auto cols = get_u32(in, name);
    if (rows != static_cast<std::uint32_t>(t.rows()) || cols != static_cast<std::uint32_t>(t.cols())) {
      throw FormatError(std::string("checkpoint tensor ") + name + " has unexpected shape");
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = get_f64(in, name);
  });
  if (flags & kHasMoments) {
    m.visit([&](const char* name, const auto& t) {
      const auto size = get_u32(in, name);
      if (size != 0 && size != static_cast<std::uint32_t>(t.size())) {
        throw FormatError(std::string("checkpoint moments for ") + name + " have unexpected size");
      }
      Eigen::ArrayXd first(size), second(size);
      for (std::uint32_t j = 0; j < size; ++j) first[j] = get_f64(in, name);
      for (std::uint32_t j = 0; j < size; ++j) second[j] = get_f64(in, name);
      ck.adam.first.push_back(std::move(first));
      ck.adam.second.push_back(std::move(second));
    });
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_contrastive = 0.0;
  double mean_head = 0.0;
  std::optional<MetricValues> dev;
  bool selected = false;
};

struct TrainResult {
  Checkpoint checkpoint;  // best-dev epoch, or the last epoch without a dev set
  Checkpoint last;
  std::vector<EpochLog> log;
};

inline nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},
                   {"mean_loss", e.mean_loss},
                   {"mean_contrastive", e.mean_contrastive},
                   {"mean_head", e.mean_head},
                   {"selected", e.selected}};
  if (e.dev) {
    j["dev"] = {{"nmi", e.dev->nmi},
                {"ari", e.dev->ari},
                {"loc3", e.dev->loc3},
                {"one_to_one", e.dev->one_to_one},
                {"shen_f", e.dev->shen_f}};
  }
  return j;
}

struct TrainInputs {
  std::span<const Dialogue> train;
  std::span<const Dialogue> dev;
  const EmbeddingMap* precomputed = nullptr;  // null: learn a token table
  const Checkpoint* resume = nullptr;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Mean-loss over a prepared corpus without touching the parameters.
inline double mean_loss(const Model& model, std::span<const EncodedDialogue> data, const ContrastiveConfig& cfg) {
  double s = 0.0;
  for (const auto& e : data) s += dialogue_loss(model, e, cfg).total;
  return data.empty() ? 0.0 : s / static_cast<double>(data.size());
}

/// Seeded-shuffle Adam training. Each step averages the per-dialogue loss
/// gradient over a batch of whole dialogues. With a dev set, Shen-F under
/// k-means with gold k picks the retained checkpoint.
inline TrainResult train(const TrainInputs& in, const TrainConfig& cfg) {
  cfg.validate();
  if (in.train.empty()) throw ValidationError("training corpus is empty");
  for (const auto& d : in.train) {
    if (!d.labeled()) throw ValidationError("training dialogue '" + d.dialogue_id + "' has no session labels");
    if (d.labeling().k > cfg.k_max) {
      throw ValidationError("training dialogue '" + d.dialogue_id + "' has more sessions than k_max");
    }
  }

  Checkpoint ck;
  if (in.resume) {
    ck = *in.resume;
    if (ck.model.shape.dim != cfg.dim || ck.model.shape.k_max != cfg.k_max || ck.model.shape.variant != cfg.variant) {
      throw ConfigError("resume checkpoint does not match the configured model shape");
    }
  } else {
    TokenVocabulary vocab;
    if (!in.precomputed) vocab = build_vocabulary(in.train, cfg.dim, cfg.seed);
    ck.model = make_model({cfg.dim, cfg.k_max, cfg.variant}, std::move(vocab), cfg.seed);
    ck.adam = make_adam_state(ck.model, cfg);
  }
  ck.config_hash = config_hash(cfg);
  ck.freeze_encoder = cfg.freeze_encoder;
  if (ck.adam.first.size() != kTensorCount) throw ConfigError("resume checkpoint carries no optimizer state");

  std::vector<EncodedDialogue> train_set, dev_set;
  for (const auto& d : in.train) train_set.push_back(prepare_dialogue(ck.model, d, in.precomputed));
  for (const auto& d : in.dev) {
    if (d.labeled()) dev_set.push_back(prepare_dialogue(ck.model, d, in.precomputed));
  }

  DisentangleOptions dev_opt;
  dev_opt.k_source = KSource::gold;
  dev_opt.seed = cfg.seed;

  TrainResult result;
  std::optional<double> best_dev;
  std::mt19937_64 rng(cfg.seed + ck.adam.step);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      ModelGradients grads = ck.model.zero_gradients();
      if (cfg.freeze_encoder) grads.table.resize(0, 0);
      for (std::size_t b = start; b < stop; ++b) {
        const DialogueLoss l = dialogue_loss(ck.model, train_set[order[b]], cfg.contrastive, &grads, scale);
        log.mean_loss += l.total;
        log.mean_contrastive += l.contrastive;
        log.mean_head += l.head;
      }
      if (cfg.clip_norm > 0.0) {
        const double norm = gradient_norm(grads);
        if (norm > cfg.clip_norm) grads *= cfg.clip_norm / norm;
      }
      adam_step(ck.model, grads, ck.adam, cfg);
    }
    const auto count = static_cast<double>(train_set.size());
    log.mean_loss /= count;
    log.mean_contrastive /= count;
    log.mean_head /= count;

    if (!dev_set.empty()) {
      log.dev = score_dialogues(ck.model, dev_set, dev_opt).corpus;
      if (!best_dev || log.dev->shen_f > *best_dev) {
        best_dev = log.dev->shen_f;
        log.selected = true;
        result.checkpoint = ck;
      }
    } else {
      log.selected = true;
    }
    if (in.on_epoch) in.on_epoch(log);
    result.log.push_back(log);
  }
  result.last = ck;
  if (!best_dev) result.checkpoint = ck;
  return result;
}

}  // namespace clucdd
