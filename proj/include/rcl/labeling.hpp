#pragma once

// Teacher-record ingestion: JSON Lines in, pseudo-label matrix out.

#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rcl/consensus.hpp"
#include "rcl/error.hpp"
#include "rcl/text_match.hpp"

namespace rcl {

/// Lines of {"sample_id": str, "teacher": int, "text": str}. Blank lines are
/// skipped; (sample_id, teacher) pairs must be unique.
inline std::vector<TeacherRecord> read_teacher_records(std::istream& in) {
  std::vector<TeacherRecord> records;
  std::map<std::pair<std::string, int>, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "teacher records line " + std::to_string(line_no);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("sample_id") || !obj.contains("teacher") || !obj.contains("text") ||
        !obj["sample_id"].is_string() || !obj["teacher"].is_number_integer() || !obj["text"].is_string())
      fail(ErrorKind::Parse, where + ": expected {\"sample_id\": str, \"teacher\": int, \"text\": str}");
    TeacherRecord r{obj["sample_id"].get<std::string>(), obj["teacher"].get<int>(), obj["text"].get<std::string>()};
    if (r.teacher_id < 0) fail(ErrorKind::Parse, where + ": negative teacher id");
    if (!seen.emplace(std::make_pair(r.sample_id, r.teacher_id), records.size()).second)
      fail(ErrorKind::Parse, where + ": duplicate (sample_id, teacher) pair");
    records.push_back(std::move(r));
  }
  return records;
}

inline void write_teacher_record(std::ostream& out, const TeacherRecord& r) {
  nlohmann::ordered_json obj;
  obj["sample_id"] = r.sample_id;
  obj["teacher"] = r.teacher_id;
  obj["text"] = r.raw_text;
  out << obj.dump() << '\n';
}

enum class UnlabeledPolicy { Drop, Error };

struct TeacherCounts {
  std::size_t labeled = 0;
  std::size_t dropped = 0;
};

struct LabelingResult {
  PseudoLabelMatrix matrix;
  std::vector<TeacherCounts> per_teacher;
};

/// Maps every record to a class index. Rows follow first appearance of each
/// sample_id; teacher count is max teacher id + 1. Cells with no record, or
/// whose text could not be matched under UnlabeledPolicy::Drop, hold -1.
inline LabelingResult label_records(const std::vector<TeacherRecord>& records, const LabelMatcher& matcher,
                                    UnlabeledPolicy policy) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> row_of;
  int max_teacher = -1;
  for (const auto& r : records) {
    if (row_of.emplace(r.sample_id, ids.size()).second) ids.push_back(r.sample_id);
    max_teacher = std::max(max_teacher, r.teacher_id);
  }
  const auto teachers = static_cast<std::size_t>(max_teacher + 1);
  LabelingResult out{PseudoLabelMatrix(std::move(ids), teachers, matcher.vocab().size()),
                     std::vector<TeacherCounts>(teachers)};
  for (const auto& r : records) {
    auto& counts = out.per_teacher[static_cast<std::size_t>(r.teacher_id)];
    try {
      out.matrix.at(row_of.at(r.sample_id), static_cast<std::size_t>(r.teacher_id)) = matcher.assign(r.raw_text).class_index;
      ++counts.labeled;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Unlabeled || policy == UnlabeledPolicy::Error)
        fail(e.kind(), "sample '" + r.sample_id + "' teacher " + std::to_string(r.teacher_id) + ": " + e.what());
      ++counts.dropped;
    }
  }
  return out;
}

}  // namespace rcl
