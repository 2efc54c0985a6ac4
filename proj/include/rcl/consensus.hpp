#pragma once

// Inter-teacher agreement: reliability scores, the R / LR / UR partition,
// teacher-mode labels and multi-hot class masks.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "rcl/error.hpp"
#include "rcl/random.hpp"

namespace rcl {

inline constexpr int kUnlabeled = -1;

/// N x M matrix of per-teacher class assignments, row-major.
class PseudoLabelMatrix {
 public:
  PseudoLabelMatrix() = default;
  PseudoLabelMatrix(std::vector<std::string> sample_ids, std::size_t teachers, std::size_t classes)
      : ids_(std::move(sample_ids)), teachers_(teachers), classes_(classes), labels_(ids_.size() * teachers, kUnlabeled) {}

  std::size_t rows() const { return ids_.size(); }
  std::size_t teachers() const { return teachers_; }
  std::size_t classes() const { return classes_; }
  const std::vector<std::string>& sample_ids() const { return ids_; }
  const std::string& sample_id(std::size_t i) const { return ids_[i]; }

  std::span<const int> row(std::size_t i) const { return {labels_.data() + i * teachers_, teachers_}; }
  std::span<int> row(std::size_t i) { return {labels_.data() + i * teachers_, teachers_}; }
  int at(std::size_t i, std::size_t m) const { return labels_[i * teachers_ + m]; }
  int& at(std::size_t i, std::size_t m) { return labels_[i * teachers_ + m]; }

  bool row_complete(std::size_t i) const {
    auto r = row(i);
    return std::none_of(r.begin(), r.end(), [](int v) { return v < 0; });
  }

  void append_row(std::string id, std::span<const int> labels) {
    if (labels.size() != teachers_) fail(ErrorKind::Shape, "row width differs from teacher count");
    ids_.push_back(std::move(id));
    labels_.insert(labels_.end(), labels.begin(), labels.end());
  }

 private:
  std::vector<std::string> ids_;
  std::size_t teachers_ = 0;
  std::size_t classes_ = 0;
  std::vector<int> labels_;
};

/// Number of ordered teacher pairs (m, n), m != n, that agree. Computed from
/// label multiplicities: sum over classes of k(k-1).
inline std::int64_t agreement_count(std::span<const int> row) {
  for (int v : row)
    if (v < 0) fail(ErrorKind::InvalidRow, "row contains an unlabeled entry");
  std::vector<int> sorted(row.begin(), row.end());
  std::sort(sorted.begin(), sorted.end());
  std::int64_t total = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto k = static_cast<std::int64_t>(j - i);
    total += k * (k - 1);
    i = j;
  }
  return total;
}

inline std::int64_t ordered_pairs(std::size_t teachers) {
  const auto m = static_cast<std::int64_t>(teachers);
  return m * (m - 1);
}

inline double reliability(std::span<const int> row) {
  if (row.size() < 2) fail(ErrorKind::Config, "reliability needs at least 2 teachers");
  return static_cast<double>(agreement_count(row)) / static_cast<double>(ordered_pairs(row.size()));
}

enum class Tag { R, LR, UR };

inline const char* tag_name(Tag t) {
  switch (t) {
    case Tag::R:
      return "R";
    case Tag::LR:
      return "LR";
    default:
      return "UR";
  }
}

inline Tag tag_for(std::int64_t agreements, std::size_t teachers) {
  if (agreements == 0) return Tag::UR;
  if (agreements == ordered_pairs(teachers)) return Tag::R;
  return Tag::LR;
}

struct ReliabilityPartition {
  std::vector<std::int64_t> agreements;
  std::vector<double> scores;
  std::vector<Tag> tags;

  std::size_t size() const { return tags.size(); }

  std::vector<std::size_t> indices(std::initializer_list<Tag> wanted) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (std::find(wanted.begin(), wanted.end(), tags[i]) != wanted.end()) out.push_back(i);
    return out;
  }

  std::size_t count(Tag t) const { return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), t)); }
};

/// Tags are decided on the integer agreement count, never on the float score.
inline ReliabilityPartition partition(const PseudoLabelMatrix& pl) {
  if (pl.teachers() < 2) fail(ErrorKind::Config, "partition needs at least 2 teachers");
  ReliabilityPartition out;
  out.agreements.reserve(pl.rows());
  out.scores.reserve(pl.rows());
  out.tags.reserve(pl.rows());
  const double pairs = static_cast<double>(ordered_pairs(pl.teachers()));
  for (std::size_t i = 0; i < pl.rows(); ++i) {
    std::int64_t k;
    try {
      k = agreement_count(pl.row(i));
    } catch (const Error& e) {
      fail(e.kind(), "sample '" + pl.sample_id(i) + "': " + e.what());
    }
    out.agreements.push_back(k);
    out.scores.push_back(static_cast<double>(k) / pairs);
    out.tags.push_back(tag_for(k, pl.teachers()));
  }
  return out;
}

struct CompleteRows {
  PseudoLabelMatrix matrix;
  std::vector<std::string> excluded;
};

/// Splits off rows with any unlabeled entry; those cannot be scored.
inline CompleteRows filter_complete_rows(const PseudoLabelMatrix& pl) {
  CompleteRows out{PseudoLabelMatrix({}, pl.teachers(), pl.classes()), {}};
  for (std::size_t i = 0; i < pl.rows(); ++i) {
    if (pl.row_complete(i))
      out.matrix.append_row(pl.sample_id(i), pl.row(i));
    else
      out.excluded.push_back(pl.sample_id(i));
  }
  return out;
}

enum class TiePolicy { Random, LowestIndex };

/// Most frequent valid label of the row. Tied maxima are broken uniformly with
/// `rng` under TiePolicy::Random, or by smallest class index otherwise.
inline int mode_label(std::span<const int> row, Rng& rng, TiePolicy policy = TiePolicy::Random) {
  std::map<int, int> counts;
  for (int v : row)
    if (v >= 0) ++counts[v];
  if (counts.empty()) fail(ErrorKind::InvalidRow, "mode of a row with no valid labels");
  int best = 0;
  for (const auto& [label, n] : counts) best = std::max(best, n);
  std::vector<int> tied;
  for (const auto& [label, n] : counts)
    if (n == best) tied.push_back(label);
  if (tied.size() == 1 || policy == TiePolicy::LowestIndex) return tied.front();
  std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
  return tied[pick(rng)];
}

/// Per-row tie-break stream: depends only on the master seed and row index.
inline Rng mode_rng(std::uint64_t seed, std::size_t row_index) {
  return make_rng(seed, {stream::kMode, static_cast<std::uint64_t>(row_index)});
}

/// Union of the teachers' one-hot votes over C classes.
inline std::vector<std::uint8_t> multi_hot_mask(std::span<const int> row, std::size_t classes) {
  std::vector<std::uint8_t> bits(classes, 0);
  for (int v : row) {
    if (v < 0 || static_cast<std::size_t>(v) >= classes)
      fail(ErrorKind::Bounds, "label " + std::to_string(v) + " outside 0.." + std::to_string(classes - 1));
    bits[static_cast<std::size_t>(v)] = 1;
  }
  return bits;
}

// ---------------------------------------------------------------------------
// CSV formats

inline void write_pseudo_labels(std::ostream& out, const PseudoLabelMatrix& pl) {
  out << "sample_id";
  for (std::size_t m = 0; m < pl.teachers(); ++m) out << ",teacher_" << m;
  out << '\n';
  for (std::size_t i = 0; i < pl.rows(); ++i) {
    out << pl.sample_id(i);
    for (int v : pl.row(i)) out << ',' << v;
    out << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline long parse_int_field(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads the pseudo-label CSV. `classes` bounds label values when non-zero;
/// otherwise the class count is taken as max label + 1.
inline PseudoLabelMatrix read_pseudo_labels(std::istream& in, std::size_t classes = 0) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, "pseudo-label CSV is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "sample_id") fail(ErrorKind::Parse, "line 1: expected 'sample_id,teacher_0,...'");
  for (std::size_t m = 1; m < header.size(); ++m)
    if (header[m] != "teacher_" + std::to_string(m - 1)) fail(ErrorKind::Parse, "line 1: bad column '" + header[m] + "'");
  const std::size_t teachers = header.size() - 1;
  std::vector<std::string> ids;
  std::vector<int> values;
  std::unordered_set<std::string> seen;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields");
    if (!seen.insert(fields[0]).second) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": duplicate sample_id");
    ids.push_back(fields[0]);
    for (std::size_t m = 1; m < fields.size(); ++m) {
      const long v = detail::parse_int_field(fields[m], line_no);
      if (v < -1 || (classes > 0 && v >= static_cast<long>(classes)))
        fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": label " + std::to_string(v) + " out of range");
      values.push_back(static_cast<int>(v));
      max_label = std::max(max_label, static_cast<int>(v));
    }
  }
  PseudoLabelMatrix pl(std::move(ids), teachers, classes > 0 ? classes : static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < pl.rows(); ++i)
    for (std::size_t m = 0; m < teachers; ++m) pl.at(i, m) = values[i * teachers + m];
  return pl;
}

inline void write_partition(std::ostream& out, const PseudoLabelMatrix& pl, const ReliabilityPartition& part) {
  out << "sample_id,score,tag\n";
  char buf[32];
  for (std::size_t i = 0; i < part.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", part.scores[i]);
    out << pl.sample_id(i) << ',' << buf << ',' << tag_name(part.tags[i]) << '\n';
  }
}

}  // namespace rcl
