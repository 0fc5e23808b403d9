#pragma once

// Utterance encoders: a trainable token table with mean pooling, and
// externally precomputed per-utterance vectors.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "clucdd/binary_io.hpp"
#include "clucdd/corpus.hpp"
#include "clucdd/error.hpp"

namespace clucdd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Lowercased split on whitespace and ASCII punctuation; punctuation is
/// discarded.
inline std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct TokenVocabulary {
  static constexpr const char* kUnknownToken = "<unk>";
  static constexpr std::uint32_t kTableMagic = binary::fourcc('C', 'V', 'T', 'B');
  static constexpr std::uint32_t kTableVersion = 1;

  std::vector<std::string> tokens;  // index -> token
  std::unordered_map<std::string, int> index;
  int unknown = 0;
  Matrix table;  // V x d

  int size() const noexcept { return static_cast<int>(tokens.size()); }
  int dim() const noexcept { return static_cast<int>(table.cols()); }

  void add(const std::string& token) {
    if (index.emplace(token, size()).second) tokens.push_back(token);
  }

  int lookup(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? unknown : it->second;
  }

  /// Non-empty by construction: empty or all-unknown text yields [unknown].
  std::vector<int> tokenize(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : split_tokens(text)) ids.push_back(lookup(t));
    if (ids.empty()) ids.push_back(unknown);
    return ids;
  }
};

/// Vocabulary over every token in the corpus, sorted, with <unk> at index 0.
/// Table rows are uniform in [-0.05, 0.05].
inline TokenVocabulary build_vocabulary(std::span<const Dialogue> corpus, int dim, std::uint64_t seed) {
  std::set<std::string> seen;
  for (const auto& d : corpus) {
    for (const auto& u : d.utterances) {
      for (auto& t : split_tokens(u.text)) seen.insert(std::move(t));
    }
  }
  seen.erase(TokenVocabulary::kUnknownToken);
  TokenVocabulary v;
  v.add(TokenVocabulary::kUnknownToken);
  v.unknown = 0;
  for (const auto& t : seen) v.add(t);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(-0.05, 0.05);
  v.table.resize(v.size(), dim);
  for (Eigen::Index r = 0; r < v.table.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.table.cols(); ++c) v.table(r, c) = init(rng);
  }
  return v;
}

/// Mean of the table rows selected by `tokens`.
inline Vector encode_utterance(std::span<const int> tokens, const Matrix& table) {
  if (tokens.empty()) throw std::invalid_argument("encode_utterance: empty token list");
  Vector sum = Vector::Zero(table.cols());
  for (int t : tokens) sum += table.row(t).transpose();
  return sum / static_cast<double>(tokens.size());
}

/// Accumulates the gradient of a pooled vector back into the table rows.
inline void encode_utterance_backward(std::span<const int> tokens, const Vector& grad_pooled,
                                      Matrix& grad_table) {
  const double w = 1.0 / static_cast<double>(tokens.size());
  for (int t : tokens) grad_table.row(t) += w * grad_pooled.transpose();
}

using EmbeddingMap = std::unordered_map<std::string, Vector>;

/// Reads line-delimited {"id": str, "vector": [number x d]} records.
inline EmbeddingMap read_precomputed(std::istream& in) {
  EmbeddingMap out;
  Eigen::Index dim = -1;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), line);
    } catch (const nlohmann::json::out_of_range&) {
      throw FormatError("embedding on line " + std::to_string(line) + " contains a non-finite value");
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() || !rec.contains("vector") ||
        !rec["vector"].is_array()) {
      throw ParseError("embedding record needs a string 'id' and an array 'vector'", line);
    }
    const auto id = rec["id"].get<std::string>();
    const auto& arr = rec["vector"];
    const auto size = static_cast<Eigen::Index>(arr.size());
    if (dim < 0) dim = size;
    if (size != dim || size == 0) {
      throw FormatError("embedding '" + id + "' has dimension " + std::to_string(size) + ", expected " +
                        std::to_string(dim));
    }
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) {
      const auto& x = arr[static_cast<std::size_t>(i)];
      if (!x.is_number()) throw FormatError("embedding '" + id + "' contains a non-numeric entry");
      v[i] = x.get<double>();
      if (!std::isfinite(v[i])) throw FormatError("embedding '" + id + "' contains a non-finite value");
    }
    if (!out.emplace(id, std::move(v)).second) throw FormatError("duplicate embedding id '" + id + "'");
  }
  return out;
}

inline EmbeddingMap load_precomputed(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_precomputed(in);
}

/// Writes the token list as line-delimited {"token", "index"} records and the
/// table as a little-endian float32 blob with a 16-byte header.
inline void save_vocabulary(const TokenVocabulary& v, const std::string& tokens_path,
                            const std::string& table_path) {
  std::ofstream tok(tokens_path, std::ios::binary);
  if (!tok) throw Error("cannot write '" + tokens_path + "'");
  for (int i = 0; i < v.size(); ++i) {
    tok << nlohmann::json{{"token", v.tokens[static_cast<std::size_t>(i)]}, {"index", i}}.dump() << '\n';
  }
  std::ofstream tab(table_path, std::ios::binary);
  if (!tab) throw Error("cannot write '" + table_path + "'");
  binary::put_u32(tab, TokenVocabulary::kTableMagic);
  binary::put_u32(tab, TokenVocabulary::kTableVersion);
  binary::put_u32(tab, static_cast<std::uint32_t>(v.table.rows()));
  binary::put_u32(tab, static_cast<std::uint32_t>(v.table.cols()));
  for (Eigen::Index r = 0; r < v.table.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.table.cols(); ++c) binary::put_f32(tab, static_cast<float>(v.table(r, c)));
  }
}

inline TokenVocabulary load_vocabulary(const std::string& tokens_path, const std::string& table_path) {
  std::ifstream tab(table_path, std::ios::binary);
  if (!tab) throw Error("cannot open '" + table_path + "'");
  if (binary::get_u32(tab, "table magic") != TokenVocabulary::kTableMagic) {
    throw FormatError("'" + table_path + "' is not a token table");
  }
  if (binary::get_u32(tab, "table version") != TokenVocabulary::kTableVersion) {
    throw FormatError("unsupported token table version");
  }
  const auto rows = binary::get_u32(tab, "table rows");
  const auto cols = binary::get_u32(tab, "table columns");
  TokenVocabulary v;
  v.tokens.resize(rows);
  v.table.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      v.table(r, c) = binary::get_f32(tab, "table entry");
      if (!std::isfinite(v.table(r, c))) throw FormatError("token table contains a non-finite value");
    }
  }

  std::ifstream tok(tokens_path);
  if (!tok) throw Error("cannot open '" + tokens_path + "'");
  std::vector<bool> filled(rows, false);
  std::string text;
  std::size_t line = 0;
  while (std::getline(tok, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(e.what(), line);
    }
    if (!rec.contains("token") || !rec["token"].is_string() || !rec.contains("index") ||
        !rec["index"].is_number_integer()) {
      throw ParseError("vocabulary record needs 'token' and integer 'index'", line);
    }
    const auto idx = rec["index"].get<long long>();
    if (idx < 0 || idx >= static_cast<long long>(rows) || filled[static_cast<std::size_t>(idx)]) {
      throw FormatError("vocabulary index " + std::to_string(idx) + " is out of range or repeated");
    }
    filled[static_cast<std::size_t>(idx)] = true;
    v.tokens[static_cast<std::size_t>(idx)] = rec["token"].get<std::string>();
    v.index.emplace(v.tokens[static_cast<std::size_t>(idx)], static_cast<int>(idx));
  }
  for (std::uint32_t i = 0; i < rows; ++i) {
    if (!filled[i]) throw FormatError("vocabulary is missing index " + std::to_string(i));
  }
  auto unk = v.index.find(TokenVocabulary::kUnknownToken);
  if (unk == v.index.end()) throw FormatError("vocabulary has no <unk> token");
  v.unknown = unk->second;
  return v;
}

}  // namespace clucdd
