#pragma once

// Closed-set labeling of free-form teacher text by cosine similarity against
// class-name embeddings.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rcl/error.hpp"

namespace rcl {

/// Lowercase ASCII, map ASCII punctuation to spaces, collapse whitespace runs
/// and trim. Bytes >= 0x80 pass through unchanged.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    const bool blank = u < 0x80 && (std::isspace(u) || std::ispunct(u));
    if (blank) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
  }
  return out;
}

enum class EmbeddingSource { Precomputed, Ngram };

struct TextEmbedding {
  std::vector<double> vector;
  EmbeddingSource source = EmbeddingSource::Ngram;
  // Set when the input produced no features; such embeddings never match.
  bool zero = false;

  std::size_t dim() const { return vector.size(); }
};

class ClassVocab {
 public:
  explicit ClassVocab(std::vector<std::string> names,
                      std::optional<std::vector<std::vector<double>>> embeddings = std::nullopt)
      : names_(std::move(names)), embeddings_(std::move(embeddings)) {
    if (names_.size() < 2) fail(ErrorKind::Config, "class vocabulary needs at least 2 classes");
    for (std::size_t c = 0; c < names_.size(); ++c) {
      std::string key = normalize_text(names_[c]);
      if (key.empty()) fail(ErrorKind::Config, "class " + std::to_string(c) + " has an empty name");
      if (!index_.emplace(key, static_cast<int>(c)).second)
        fail(ErrorKind::Config, "duplicate class name after normalization: '" + names_[c] + "'");
    }
    if (embeddings_) {
      if (embeddings_->size() != names_.size())
        fail(ErrorKind::Config, "class embedding count differs from class count");
      for (const auto& v : *embeddings_) {
        double sq = 0.0;
        for (double x : v) sq += x * x;
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
          fail(ErrorKind::Config, "class embeddings must have unit L2 norm");
      }
    }
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t c) const { return names_.at(c); }
  const std::vector<std::string>& names() const { return names_; }
  const std::optional<std::vector<std::vector<double>>>& embeddings() const { return embeddings_; }

  /// Class whose normalized name equals the normalized text, if any.
  std::optional<int> exact_match(std::string_view text) const {
    auto it = index_.find(normalize_text(text));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> names_;
  std::optional<std::vector<std::vector<double>>> embeddings_;
  std::unordered_map<std::string, int> index_;
};

/// One class name per line; the zero-based line number is the class index.
inline ClassVocab read_vocab(std::istream& in) {
  std::vector<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      // A single trailing newline is fine; interior blank lines would shift indices.
      if (in.peek() == std::char_traits<char>::eof()) break;
      fail(ErrorKind::Parse, "vocab line " + std::to_string(line_no) + ": empty class name");
    }
    names.push_back(line);
  }
  return ClassVocab(std::move(names));
}

inline ClassVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open vocab file: " + path);
  return read_vocab(in);
}

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual TextEmbedding embed(std::string_view text) const = 0;
};

/// Hashed character-trigram term-frequency embedder over normalized text.
/// Texts shorter than three bytes after normalization hash as a single gram.
class NgramEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDim = 4096;
  static constexpr unsigned kBits = 12;
  static constexpr std::uint64_t kMultiplier = 0x9E3779B97F4A7C15ULL;

  static std::size_t bucket(std::string_view gram) {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < gram.size(); ++i)
      key |= static_cast<std::uint64_t>(static_cast<unsigned char>(gram[i])) << (8 * i);
    return static_cast<std::size_t>((key * kMultiplier) >> (64 - kBits));
  }

  TextEmbedding embed(std::string_view text) const override {
    TextEmbedding e;
    e.source = EmbeddingSource::Ngram;
    e.vector.assign(kDim, 0.0);
    const std::string norm = normalize_text(text);
    if (norm.empty()) {
      e.zero = true;
      return e;
    }
    if (norm.size() < 3) {
      // Too short for a trigram: use the word-initial gram (" tv"), which is
      // also what the word contributes when it appears inside a sentence.
      e.vector[bucket(" " + norm)] += 1.0;
    } else {
      for (std::size_t i = 0; i + 3 <= norm.size(); ++i)
        e.vector[bucket(std::string_view(norm).substr(i, 3))] += 1.0;
    }
    double sq = 0.0;
    for (double x : e.vector) sq += x * x;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : e.vector) x *= inv;
    return e;
  }
};

/// Table of externally computed sentence embeddings, keyed by normalized text.
/// File format: `text<TAB>f1 f2 ... fd` per line, d constant across the file.
class PrecomputedEmbedder final : public Embedder {
 public:
  static PrecomputedEmbedder read(std::istream& in) {
    PrecomputedEmbedder table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        fail(ErrorKind::Parse, "embedding table line " + std::to_string(line_no) + ": missing tab");
      std::vector<double> v;
      const char* p = line.c_str() + tab + 1;
      const char* end = line.c_str() + line.size();
      while (p < end) {
        char* next = nullptr;
        const double x = std::strtod(p, &next);
        if (next == p) {
          if (std::isspace(static_cast<unsigned char>(*p))) {
            ++p;
            continue;
          }
          fail(ErrorKind::Parse, "embedding table line " + std::to_string(line_no) + ": bad number");
        }
        if (!std::isfinite(x))
          fail(ErrorKind::Parse, "embedding table line " + std::to_string(line_no) + ": non-finite value");
        v.push_back(x);
        p = next;
      }
      if (v.empty())
        fail(ErrorKind::Parse, "embedding table line " + std::to_string(line_no) + ": empty vector");
      if (table.dim_ == 0) table.dim_ = v.size();
      if (v.size() != table.dim_)
        fail(ErrorKind::Parse, "embedding table line " + std::to_string(line_no) + ": expected " +
                                   std::to_string(table.dim_) + " values, got " + std::to_string(v.size()));
      std::string key = normalize_text(line.substr(0, tab));
      if (!table.rows_.emplace(std::move(key), std::move(v)).second)
        fail(ErrorKind::Parse, "embedding table line " + std::to_string(line_no) + ": duplicate text");
    }
    return table;
  }

  static PrecomputedEmbedder load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot open embedding table: " + path);
    return read(in);
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return rows_.size(); }

  TextEmbedding embed(std::string_view text) const override {
    auto it = rows_.find(normalize_text(text));
    if (it == rows_.end()) fail(ErrorKind::LookupMiss, "no precomputed embedding for text: '" + std::string(text) + "'");
    TextEmbedding e;
    e.source = EmbeddingSource::Precomputed;
    e.vector = it->second;
    e.zero = true;
    for (double x : e.vector) {
      if (x != 0.0) {
        e.zero = false;
        break;
      }
    }
    return e;
  }

 private:
  std::unordered_map<std::string, std::vector<double>> rows_;
  std::size_t dim_ = 0;
};

/// Cosine similarity. Identical operands return exactly 1.
inline double sts(const TextEmbedding& a, const TextEmbedding& b) {
  if (a.dim() != b.dim())
    fail(ErrorKind::Shape, "similarity of vectors with dimensions " + std::to_string(a.dim()) + " and " +
                               std::to_string(b.dim()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.vector[i] * b.vector[i];
    na += a.vector[i] * a.vector[i];
    nb += b.vector[i] * b.vector[i];
  }
  if (a.zero || b.zero || na == 0.0 || nb == 0.0) fail(ErrorKind::Undefined, "similarity with an all-zero vector");
  // sqrt(fl(x*x)) == x, so self-similarity is exactly dot/na = 1.
  const double s = dot / std::sqrt(na * nb);
  return s > 1.0 ? 1.0 : (s < -1.0 ? -1.0 : s);
}

struct LabelAssignment {
  int class_index = -1;
  double similarity = 0.0;
};

/// Class-side embeddings computed once, then matched against teacher text.
class LabelMatcher {
 public:
  LabelMatcher(const ClassVocab& vocab, const Embedder& embedder) : vocab_(&vocab), embedder_(&embedder) {
    class_vectors_.reserve(vocab.size());
    for (std::size_t c = 0; c < vocab.size(); ++c) {
      if (vocab.embeddings()) {
        TextEmbedding e;
        e.source = EmbeddingSource::Precomputed;
        e.vector = (*vocab.embeddings())[c];
        class_vectors_.push_back(std::move(e));
      } else {
        class_vectors_.push_back(embedder.embed(vocab.name(c)));
      }
    }
  }

  const ClassVocab& vocab() const { return *vocab_; }

  /// argmax_c sts(embed(text), embed(name_c)), lowest index on ties. Verbatim
  /// class names (after normalization) short-circuit to their own class.
  LabelAssignment assign(std::string_view text) const {
    if (auto exact = vocab_->exact_match(text)) return {*exact, 1.0};
    TextEmbedding query;
    try {
      query = embedder_->embed(text);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::LookupMiss) fail(ErrorKind::Unlabeled, e.what());
      throw;
    }
    if (query.zero) fail(ErrorKind::Unlabeled, "text has no embeddable content: '" + std::string(text) + "'");
    LabelAssignment best;
    for (std::size_t c = 0; c < class_vectors_.size(); ++c) {
      if (class_vectors_[c].zero) continue;
      const double s = sts(query, class_vectors_[c]);
      if (best.class_index < 0 || s > best.similarity) best = {static_cast<int>(c), s};
    }
    if (best.class_index < 0) fail(ErrorKind::Unlabeled, "no class name is embeddable");
    return best;
  }

 private:
  const ClassVocab* vocab_;
  const Embedder* embedder_;
  std::vector<TextEmbedding> class_vectors_;
};

inline int assign_pseudo_label(std::string_view text, const ClassVocab& vocab, const Embedder& embedder) {
  return LabelMatcher(vocab, embedder).assign(text).class_index;
}

struct TeacherRecord {
  std::string sample_id;
  int teacher_id = 0;
  std::string raw_text;
};

}  // namespace rcl
