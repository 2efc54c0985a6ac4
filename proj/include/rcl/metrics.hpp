#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcl/consensus.hpp"
#include "rcl/error.hpp"

namespace rcl {

inline double accuracy(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) fail(ErrorKind::Shape, "prediction and truth lengths differ");
  if (predictions.empty()) fail(ErrorKind::Shape, "accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

/// Teacher majority vote per row (ties via the per-row seeded stream).
inline std::vector<int> majority_votes(const PseudoLabelMatrix& pl, std::uint64_t seed, TiePolicy ties = TiePolicy::Random) {
  std::vector<int> out;
  out.reserve(pl.rows());
  for (std::size_t i = 0; i < pl.rows(); ++i) {
    Rng rng = mode_rng(seed, i);
    out.push_back(mode_label(pl.row(i), rng, ties));
  }
  return out;
}

inline double ensemble_baseline(const PseudoLabelMatrix& pl, std::span<const int> truths, std::uint64_t seed,
                                TiePolicy ties = TiePolicy::Random) {
  const auto votes = majority_votes(pl, seed, ties);
  return accuracy(votes, truths);
}

struct ReliabilityBin {
  std::int64_t agreements = 0;  // ordered agreeing pairs; score = agreements / (M(M-1))
  double score = 0.0;
  std::size_t count = 0;
  std::optional<double> majority_accuracy;  // bins with score > 0
  std::vector<double> teacher_accuracy;     // score == 0 bin only
};

struct ReliabilityReport {
  std::size_t teachers = 0;
  std::vector<ReliabilityBin> bins;  // ascending score

  const ReliabilityBin* find(std::int64_t agreements) const {
    for (const auto& b : bins)
      if (b.agreements == agreements) return &b;
    return nullptr;
  }
};

/// Bins are the exact agreement counts present in the partition.
inline ReliabilityReport reliability_report(const PseudoLabelMatrix& pl, const ReliabilityPartition& part, std::span<const int> truths,
                                            std::uint64_t seed, TiePolicy ties = TiePolicy::Random) {
  if (truths.size() != pl.rows() || part.size() != pl.rows()) fail(ErrorKind::Shape, "report inputs have different row counts");
  const auto votes = majority_votes(pl, seed, ties);
  struct Acc {
    std::size_t count = 0, majority_hits = 0;
    std::vector<std::size_t> teacher_hits;
  };
  std::map<std::int64_t, Acc> acc;
  for (std::size_t i = 0; i < pl.rows(); ++i) {
    auto& a = acc[part.agreements[i]];
    if (a.teacher_hits.empty()) a.teacher_hits.assign(pl.teachers(), 0);
    ++a.count;
    a.majority_hits += votes[i] == truths[i];
    for (std::size_t m = 0; m < pl.teachers(); ++m) a.teacher_hits[m] += pl.at(i, m) == truths[i];
  }
  ReliabilityReport report{pl.teachers(), {}};
  const double pairs = static_cast<double>(ordered_pairs(pl.teachers()));
  for (const auto& [k, a] : acc) {
    ReliabilityBin b;
    b.agreements = k;
    b.score = static_cast<double>(k) / pairs;
    b.count = a.count;
    const double n = static_cast<double>(a.count);
    if (k > 0) {
      b.majority_accuracy = static_cast<double>(a.majority_hits) / n;
    } else {
      for (auto h : a.teacher_hits) b.teacher_accuracy.push_back(static_cast<double>(h) / n);
    }
    report.bins.push_back(std::move(b));
  }
  return report;
}

inline nlohmann::ordered_json reliability_report_json(const ReliabilityReport& r) {
  nlohmann::ordered_json j;
  j["teachers"] = r.teachers;
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : r.bins) {
    nlohmann::ordered_json e;
    e["agreements"] = b.agreements;
    e["score"] = b.score;
    e["count"] = b.count;
    if (b.majority_accuracy) e["majority_accuracy"] = *b.majority_accuracy;
    if (!b.teacher_accuracy.empty()) e["teacher_accuracy"] = b.teacher_accuracy;
    bins.push_back(std::move(e));
  }
  j["bins"] = bins;
  return j;
}

inline void print_reliability_table(std::ostream& out, const ReliabilityReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %8s %10s  %s\n", "score", "count", "majority", "per-teacher");
  out << buf;
  for (const auto& b : r.bins) {
    std::string maj = b.majority_accuracy ? std::to_string(*b.majority_accuracy).substr(0, 6) : "-";
    std::string per;
    for (double a : b.teacher_accuracy) per += (per.empty() ? "" : " ") + std::to_string(a).substr(0, 6);
    if (per.empty()) per = "-";
    std::snprintf(buf, sizeof(buf), "%-8.4f %8zu %10s  %s\n", b.score, b.count, maj.c_str(), per.c_str());
    out << buf;
  }
}

}  // namespace rcl
