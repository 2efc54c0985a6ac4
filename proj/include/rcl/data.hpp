#pragma once

// Feature datasets: loaders, writers, synthetic blobs and simulated teachers.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "rcl/consensus.hpp"
#include "rcl/error.hpp"
#include "rcl/random.hpp"

namespace rcl {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Features as seen by training code: no labels reachable from here.
struct UnlabeledView {
  const std::vector<std::string>* sample_ids;
  const FeatureMatrix* features;

  std::size_t size() const { return static_cast<std::size_t>(features->rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features->cols()); }
};

struct FeatureDataset {
  std::vector<std::string> sample_ids;
  FeatureMatrix features;
  std::optional<std::vector<int>> true_labels;

  std::size_t size() const { return sample_ids.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  UnlabeledView unlabeled() const { return {&sample_ids, &features}; }

  /// Rows reordered/subset to `rows` (indices into this dataset).
  FeatureDataset select(std::span<const std::size_t> rows) const {
    FeatureDataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    if (true_labels) out.true_labels.emplace();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.sample_ids.push_back(sample_ids[rows[k]]);
      out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(rows[k]));
      if (true_labels) out.true_labels->push_back((*true_labels)[rows[k]]);
    }
    return out;
  }

  void validate() const {
    if (features.cols() < 1) fail(ErrorKind::Parse, "feature dimension must be at least 1");
    if (static_cast<std::size_t>(features.rows()) != sample_ids.size())
      fail(ErrorKind::Parse, "sample id count differs from feature rows");
    std::unordered_set<std::string> seen;
    for (const auto& id : sample_ids)
      if (!seen.insert(id).second) fail(ErrorKind::Parse, "duplicate sample_id '" + id + "'");
    if (!features.allFinite()) fail(ErrorKind::Parse, "non-finite feature value");
    if (true_labels && true_labels->size() != sample_ids.size())
      fail(ErrorKind::Parse, "label count differs from sample count");
  }
};

// ---------------------------------------------------------------------------
// CSV: header `sample_id,f0,...,f{d-1}[,label]`

inline void write_features_csv(std::ostream& out, const FeatureDataset& ds, bool with_labels = true) {
  const bool labels = with_labels && ds.true_labels.has_value();
  out << "sample_id";
  for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
  if (labels) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.sample_ids[i];
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      // 9 significant digits round-trip every float exactly.
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      out << ',' << buf;
    }
    if (labels) out << ',' << (*ds.true_labels)[i];
    out << '\n';
  }
}

inline FeatureDataset read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, "features CSV: empty file");
  auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "sample_id") fail(ErrorKind::Parse, "features CSV line 1: first column must be sample_id");
  const bool has_label = header.size() >= 2 && header.back() == "label";
  const std::size_t d = header.size() - 1 - (has_label ? 1 : 0);
  if (d < 1) fail(ErrorKind::Parse, "features CSV line 1: no feature columns");
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 1] != "f" + std::to_string(j))
      fail(ErrorKind::Parse, "features CSV line 1: expected column f" + std::to_string(j) + ", got '" + header[j + 1] + "'");

  FeatureDataset ds;
  std::vector<float> values;
  if (has_label) ds.true_labels.emplace();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::Parse, "features CSV line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    ds.sample_ids.push_back(fields[0]);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string& f = fields[j + 1];
      char* end = nullptr;
      const float v = std::strtof(f.c_str(), &end);
      if (f.empty() || *end != '\0')
        fail(ErrorKind::Parse, "features CSV line " + std::to_string(line_no) + ": bad number '" + f + "'");
      if (!std::isfinite(v)) fail(ErrorKind::Parse, "features CSV line " + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
    }
    if (has_label) ds.true_labels->push_back(static_cast<int>(detail::parse_int_field(fields.back(), line_no)));
  }
  ds.features = Eigen::Map<FeatureMatrix>(values.data(), static_cast<Eigen::Index>(ds.sample_ids.size()),
                                          static_cast<Eigen::Index>(d));
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Binary: "RCLF0001", u64 N, u64 d, N*d little-endian f32. Rows get ids "0".."N-1".

inline constexpr std::array<char, 8> kFeatureMagic = {'R', 'C', 'L', 'F', '0', '0', '0', '1'};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return true;
}

inline void put_f32(std::ostream& out, float x) {
  std::uint32_t u;
  std::memcpy(&u, &x, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline float f32_from_le(const unsigned char* b) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float x;
  std::memcpy(&x, &u, 4);
  return x;
}

}  // namespace detail

inline void write_features_binary(std::ostream& out, const FeatureDataset& ds) {
  out.write(kFeatureMagic.data(), 8);
  detail::put_u64(out, ds.size());
  detail::put_u64(out, ds.dim());
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) detail::put_f32(out, ds.features(i, j));
}

inline FeatureDataset read_features_binary(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), 8) || magic != kFeatureMagic) fail(ErrorKind::Parse, "features binary offset 0: bad magic");
  std::uint64_t n = 0, d = 0;
  if (!detail::get_u64(in, n) || !detail::get_u64(in, d)) fail(ErrorKind::Parse, "features binary offset 8: truncated header");
  if (d < 1) fail(ErrorKind::Parse, "features binary offset 16: dimension must be at least 1");
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (n > payload.size() / 4 / d || payload.size() != n * d * 4)
    fail(ErrorKind::Parse, "features binary offset 24: header declares " + std::to_string(n) + "x" + std::to_string(d) +
                               " floats but payload holds " + std::to_string(payload.size()) + " bytes");
  FeatureDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i) {
    ds.sample_ids.push_back(std::to_string(i));
    for (std::uint64_t j = 0; j < d; ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = detail::f32_from_le(&payload[(i * d + j) * 4]);
  }
  ds.validate();
  return ds;
}

/// Picks the format from the leading magic bytes.
inline FeatureDataset load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot open features file: " + path);
  std::array<char, 8> head{};
  in.read(head.data(), 8);
  const bool binary = in.gcount() == 8 && head == kFeatureMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_features_binary(in) : read_features_csv(in);
}

/// One integer class index per line.
inline std::vector<int> read_labels(std::istream& in) {
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(static_cast<int>(detail::parse_int_field(line, line_no)));
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Class centers: seeded Gaussian directions normalized onto a sphere of
/// the given radius.
inline FeatureMatrix blob_centers(std::size_t classes, std::size_t dim, double radius, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::kBlobs, 0});
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureMatrix centers(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> v(dim);
    double sq = 0.0;
    for (double& x : v) {
      x = normal(rng);
      sq += x * x;
    }
    const double scale = radius / std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j)
      centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = static_cast<float>(v[j] * scale);
  }
  return centers;
}

struct BlobParams {
  std::size_t samples = 1000;
  std::size_t classes = 4;
  std::size_t dim = 8;
  double spread = 1.0;
  std::uint64_t seed = 0;
  double radius = 4.0;
};

/// Isotropic Gaussian clusters. Sample i belongs to class i mod C.
inline FeatureDataset make_blobs(const BlobParams& p) {
  if (p.classes < 2) fail(ErrorKind::Config, "make_blobs needs at least 2 classes");
  if (p.samples < p.classes) fail(ErrorKind::Config, "make_blobs needs at least one sample per class");
  if (p.dim < 1) fail(ErrorKind::Config, "make_blobs needs dim >= 1");
  if (!(p.spread > 0.0)) fail(ErrorKind::Config, "make_blobs spread must be positive");
  const FeatureMatrix centers = blob_centers(p.classes, p.dim, p.radius, p.seed);
  Rng rng = make_rng(p.seed, {stream::kBlobs, 1});
  std::normal_distribution<double> normal(0.0, p.spread);
  FeatureDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(p.samples), static_cast<Eigen::Index>(p.dim));
  ds.true_labels.emplace();
  char id[32];
  for (std::size_t i = 0; i < p.samples; ++i) {
    const std::size_t c = i % p.classes;
    std::snprintf(id, sizeof(id), "s%06zu", i);
    ds.sample_ids.emplace_back(id);
    ds.true_labels->push_back(static_cast<int>(c));
    for (std::size_t j = 0; j < p.dim; ++j) {
      const auto r = static_cast<Eigen::Index>(i), k = static_cast<Eigen::Index>(j);
      ds.features(r, k) = static_cast<float>(centers(static_cast<Eigen::Index>(c), k) + normal(rng));
    }
  }
  return ds;
}

inline FeatureDataset make_blobs(std::size_t samples, std::size_t classes, std::size_t dim, double spread,
                                 std::uint64_t seed) {
  return make_blobs(BlobParams{samples, classes, dim, spread, seed});
}

enum class Confusion { UniformError, AdjacentClass };

/// Teacher 0 is the reference teacher; `correlation` is only meaningful for
/// the others.
struct SimTeacherSpec {
  double accuracy = 1.0;
  Confusion confusion = Confusion::UniformError;
  double correlation = 0.0;
  std::uint64_t seed = 0;
};

/// Emits one label per (sample, teacher). A non-reference teacher first copies
/// the reference teacher's emitted label with probability `correlation`;
/// otherwise it emits the true label with probability `accuracy` and a wrong
/// label drawn from its confusion model.
inline PseudoLabelMatrix simulate_teachers(const FeatureDataset& ds, std::size_t classes,
                                           std::span<const SimTeacherSpec> specs) {
  if (!ds.true_labels) fail(ErrorKind::Config, "simulate_teachers requires true labels");
  if (specs.size() < 2) fail(ErrorKind::Config, "simulate_teachers needs at least 2 teachers");
  if (classes < 2) fail(ErrorKind::Config, "simulate_teachers needs at least 2 classes");
  for (std::size_t m = 0; m < specs.size(); ++m) {
    const auto& s = specs[m];
    if (!(s.accuracy >= 0.0 && s.accuracy <= 1.0) || !(s.correlation >= 0.0 && s.correlation <= 1.0))
      fail(ErrorKind::Config, "teacher " + std::to_string(m) + ": accuracy and correlation must lie in [0,1]");
    if (m == 0 && s.correlation != 0.0) fail(ErrorKind::Config, "teacher 0 is the reference and cannot be correlated");
  }
  PseudoLabelMatrix pl(ds.sample_ids, specs.size(), classes);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int truth = (*ds.true_labels)[i];
    if (truth < 0 || static_cast<std::size_t>(truth) >= classes) fail(ErrorKind::Config, "true label out of range");
    for (std::size_t m = 0; m < specs.size(); ++m) {
      const auto& s = specs[m];
      Rng rng = make_rng(s.seed, {stream::kTeacher, m, i});
      if (m > 0 && s.correlation > 0.0 && unit(rng) < s.correlation) {
        pl.at(i, m) = pl.at(i, 0);
        continue;
      }
      if (unit(rng) < s.accuracy) {
        pl.at(i, m) = truth;
        continue;
      }
      const auto c = static_cast<int>(classes);
      if (s.confusion == Confusion::AdjacentClass) {
        pl.at(i, m) = unit(rng) < 0.5 ? (truth + 1) % c : (truth + c - 1) % c;
      } else {
        std::uniform_int_distribution<int> wrong(0, c - 2);
        const int k = wrong(rng);
        pl.at(i, m) = k >= truth ? k + 1 : k;
      }
    }
  }
  return pl;
}

/// The 65 Office-Home object categories, used as the default vocabulary.
inline const std::vector<std::string>& office_home_classes() {
  static const std::vector<std::string> names = {
      "Alarm Clock", "Backpack",     "Batteries",  "Bed",          "Bike",        "Bottle",       "Bucket",
      "Calculator",  "Calendar",     "Candles",    "Chair",        "Clipboards",  "Computer",     "Couch",
      "Curtains",    "Desk Lamp",    "Drill",      "Eraser",       "Exit Sign",   "Fan",          "File Cabinet",
      "Flipflops",   "Flowers",      "Folder",     "Fork",         "Glasses",     "Hammer",       "Helmet",
      "Kettle",      "Keyboard",     "Knives",     "Lamp Shade",   "Laptop",      "Marker",       "Monitor",
      "Mop",         "Mouse",        "Mug",        "Notebook",     "Oven",        "Pan",          "Paper Clip",
      "Pen",         "Pencil",       "Postit Notes", "Printer",    "Push Pin",    "Radio",        "Refrigerator",
      "Ruler",       "Scissors",     "Screwdriver", "Shelf",       "Sink",        "Sneakers",     "Soda",
      "Speaker",     "Spoon",        "TV",         "Table",        "Telephone",   "ToothBrush",   "Toys",
      "Trash Can",   "Webcam"};
  return names;
}

/// Free-form phrasings a simulated teacher wraps its class name in.
inline std::string render_teacher_text(const std::string& class_name, std::size_t variant) {
  switch (variant % 4) {
    case 0:
      return class_name;
    case 1:
      return "This is a " + class_name + ".";
    case 2:
      return "The object in the image is a " + class_name + ".";
    default:
      return class_name + "!";
  }
}

}  // namespace rcl
