#pragma once

// File-to-file workflow behind the command-line tool:
// simulate -> label -> partition -> train -> eval.

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rcl/consensus.hpp"
#include "rcl/curriculum.hpp"
#include "rcl/data.hpp"
#include "rcl/error.hpp"
#include "rcl/labeling.hpp"
#include "rcl/metrics.hpp"
#include "rcl/student.hpp"
#include "rcl/text_match.hpp"

namespace rcl {

namespace fs = std::filesystem;

namespace detail {

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Config, path + ": " + e.what());
  }
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) fail(ErrorKind::Config, "cannot write " + path);
  return out;
}

/// Writes through a temporary file so readers never see a partial file.
inline void write_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    auto out = open_out(tmp, true);
    out << contents;
  }
  fs::rename(tmp, path);
}

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embedder selection: "ngram" or "precomputed:<path>".

inline std::unique_ptr<Embedder> make_embedder(const std::string& backend) {
  if (backend == "ngram") return std::make_unique<NgramEmbedder>();
  const std::string prefix = "precomputed:";
  if (backend.rfind(prefix, 0) == 0 && backend.size() > prefix.size())
    return std::make_unique<PrecomputedEmbedder>(PrecomputedEmbedder::load(backend.substr(prefix.size())));
  fail(ErrorKind::Config, "unknown backend '" + backend + "' (expected ngram or precomputed:<path>)");
}

// ---------------------------------------------------------------------------
// simulate

struct SimulationSpec {
  BlobParams blobs;
  std::vector<SimTeacherSpec> teachers;
  std::vector<std::string> vocab;
};

inline SimulationSpec parse_simulation_spec(const nlohmann::json& j) {
  SimulationSpec s;
  try {
    s.blobs.samples = j.at("samples").get<std::size_t>();
    s.blobs.classes = j.at("classes").get<std::size_t>();
    s.blobs.dim = j.at("dim").get<std::size_t>();
    s.blobs.spread = j.value("spread", 1.0);
    s.blobs.radius = j.value("radius", 4.0);
    s.blobs.seed = j.value("seed", std::uint64_t{0});
    for (const auto& t : j.at("teachers")) {
      SimTeacherSpec ts;
      ts.accuracy = t.at("accuracy").get<double>();
      const std::string conf = t.value("confusion", std::string("uniform"));
      if (conf == "uniform")
        ts.confusion = Confusion::UniformError;
      else if (conf == "adjacent")
        ts.confusion = Confusion::AdjacentClass;
      else
        fail(ErrorKind::Config, "teacher confusion must be 'uniform' or 'adjacent'");
      ts.correlation = t.value("correlation", 0.0);
      ts.seed = t.value("seed", s.blobs.seed + 1 + s.teachers.size());
      s.teachers.push_back(ts);
    }
    if (j.contains("vocab")) s.vocab = j["vocab"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("simulation config: ") + e.what());
  }
  if (s.vocab.empty()) {
    const auto& names = office_home_classes();
    if (s.blobs.classes > names.size())
      fail(ErrorKind::Config, "simulation needs an explicit vocab for more than " + std::to_string(names.size()) + " classes");
    s.vocab.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(s.blobs.classes));
  }
  if (s.vocab.size() != s.blobs.classes) fail(ErrorKind::Config, "vocab size differs from class count");
  return s;
}

struct SimulationOutput {
  FeatureDataset dataset;
  PseudoLabelMatrix labels;
  std::vector<TeacherRecord> records;
};

/// Blobs, simulated teacher labels, and teacher text rendered from the class
/// names in a few phrasings. A phrasing that the trigram matcher would resolve
/// to a different class (a hash collision can outweigh a short name) falls
/// back to the bare name, so `label` recovers the simulated matrix exactly.
inline SimulationOutput simulate(const SimulationSpec& spec) {
  ClassVocab vocab(spec.vocab);
  SimulationOutput out{make_blobs(spec.blobs), {}, {}};
  out.labels = simulate_teachers(out.dataset, spec.blobs.classes, spec.teachers);
  const NgramEmbedder ngram;
  const LabelMatcher matcher(vocab, ngram);
  constexpr std::size_t kVariants = 4;
  std::vector<std::string> text(vocab.size() * kVariants);
  for (std::size_t c = 0; c < vocab.size(); ++c)
    for (std::size_t v = 0; v < kVariants; ++v) {
      std::string t = render_teacher_text(vocab.name(c), v);
      text[c * kVariants + v] = matcher.assign(t).class_index == static_cast<int>(c) ? std::move(t) : vocab.name(c);
    }
  for (std::size_t i = 0; i < out.labels.rows(); ++i)
    for (std::size_t m = 0; m < out.labels.teachers(); ++m) {
      const auto c = static_cast<std::size_t>(out.labels.at(i, m));
      out.records.push_back({out.labels.sample_id(i), static_cast<int>(m), text[c * kVariants + (i + m) % kVariants]});
    }
  return out;
}

/// Writes features.csv (with label column), vocab.txt and teachers.jsonl.
inline void write_simulation(const SimulationOutput& sim, const std::vector<std::string>& vocab, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream features, names, records;
  write_features_csv(features, sim.dataset);
  for (const auto& n : vocab) names << n << '\n';
  for (const auto& r : sim.records) write_teacher_record(records, r);
  detail::write_atomic(dir + "/features.csv", features.str());
  detail::write_atomic(dir + "/vocab.txt", names.str());
  detail::write_atomic(dir + "/teachers.jsonl", records.str());
}

// ---------------------------------------------------------------------------
// label / partition

inline LabelingResult label_command(const std::string& records_path, const std::string& vocab_path, const std::string& backend,
                                    UnlabeledPolicy policy, const std::string& out_csv, std::ostream& log) {
  const ClassVocab vocab = load_vocab(vocab_path);
  const auto embedder = make_embedder(backend);
  std::ifstream in(records_path);
  if (!in) fail(ErrorKind::Config, "cannot open teacher records: " + records_path);
  const auto records = read_teacher_records(in);
  if (records.empty()) fail(ErrorKind::Parse, "no teacher records in " + records_path);
  LabelMatcher matcher(vocab, *embedder);
  auto result = label_records(records, matcher, policy);
  std::ostringstream csv;
  write_pseudo_labels(csv, result.matrix);
  detail::write_atomic(out_csv, csv.str());
  for (std::size_t m = 0; m < result.per_teacher.size(); ++m)
    log << "teacher " << m << ": labeled " << result.per_teacher[m].labeled << ", dropped " << result.per_teacher[m].dropped << '\n';
  return result;
}

inline PseudoLabelMatrix load_pseudo_labels(const std::string& path, std::size_t classes = 0) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open pseudo-label CSV: " + path);
  return read_pseudo_labels(in, classes);
}

struct PartitionResult {
  CompleteRows rows;
  ReliabilityPartition partition;
};

inline PartitionResult partition_command(const std::string& pl_csv, const std::string& out_csv, std::ostream& log) {
  const auto pl = load_pseudo_labels(pl_csv);
  PartitionResult r{filter_complete_rows(pl), {}};
  r.partition = partition(r.rows.matrix);
  std::ostringstream csv;
  write_partition(csv, r.rows.matrix, r.partition);
  detail::write_atomic(out_csv, csv.str());
  log << "R " << r.partition.count(Tag::R) << ", LR " << r.partition.count(Tag::LR) << ", UR " << r.partition.count(Tag::UR)
      << ", excluded (unlabeled entries) " << r.rows.excluded.size() << '\n';
  for (const auto& id : r.rows.excluded) log << "  excluded: " << id << '\n';
  return r;
}

// ---------------------------------------------------------------------------
// train

struct RunConfig {
  std::vector<StageConfig> stages;
  std::uint64_t seed = 0;
  AugmentPolicy augment;
  std::string features;
  std::string pseudo_labels;
  std::string vocab;
  std::string output_dir;
  std::vector<std::size_t> hidden{128};
  std::string init_checkpoint;  // optional warm start
  TiePolicy ties = TiePolicy::Random;
};

/// Relative paths resolve against `base_dir` (the config file's directory).
inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  try {
    if (!j.contains("stages") || !j["stages"].is_array()) fail(ErrorKind::Config, "run config needs a 'stages' array");
    for (const auto& s : j["stages"]) c.stages.push_back(parse_stage_config(s));
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("augment")) {
      const auto& a = j["augment"];
      c.augment.sigma_weak = a.value("sigma_weak", c.augment.sigma_weak);
      c.augment.sigma_strong = a.value("sigma_strong", c.augment.sigma_strong);
      c.augment.p_drop = a.value("p_drop", c.augment.p_drop);
    }
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      c.features = detail::resolve(base_dir, p.value("features", std::string()));
      c.pseudo_labels = detail::resolve(base_dir, p.value("pseudo_labels", std::string()));
      c.vocab = detail::resolve(base_dir, p.value("vocab", std::string()));
      c.output_dir = detail::resolve(base_dir, p.value("output_dir", std::string()));
    }
    if (j.contains("student")) {
      const auto& s = j["student"];
      if (s.contains("hidden")) c.hidden = s["hidden"].get<std::vector<std::size_t>>();
      c.init_checkpoint = detail::resolve(base_dir, s.value("init_checkpoint", std::string()));
    }
    if (j.contains("ties")) {
      const auto t = j["ties"].get<std::string>();
      if (t == "random")
        c.ties = TiePolicy::Random;
      else if (t == "lowest")
        c.ties = TiePolicy::LowestIndex;
      else
        fail(ErrorKind::Config, "ties must be 'random' or 'lowest'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  validate_stage_sequence(c.stages);
  c.augment.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(detail::read_json_file(path), fs::path(path).parent_path());
}

/// Checks that every input exists before any work starts.
inline void validate_paths(const RunConfig& c) {
  for (const auto& [name, path] : {std::pair{"features", c.features}, {"pseudo_labels", c.pseudo_labels}, {"vocab", c.vocab}})
    if (path.empty() || !fs::exists(path)) fail(ErrorKind::Config, std::string("paths.") + name + " missing or not found: '" + path + "'");
  if (c.output_dir.empty()) fail(ErrorKind::Config, "paths.output_dir is required");
  if (!c.init_checkpoint.empty() && !fs::exists(c.init_checkpoint))
    fail(ErrorKind::Config, "student.init_checkpoint not found: " + c.init_checkpoint);
}

struct TrainOutput {
  Student model;
  std::vector<TrainReport> reports;
  nlohmann::ordered_json report;
};

inline TrainOutput train_command(const RunConfig& cfg, std::ostream& log) {
  validate_paths(cfg);
  const ClassVocab vocab = load_vocab(cfg.vocab);
  const FeatureDataset all = load_features(cfg.features);
  const auto pl_all = load_pseudo_labels(cfg.pseudo_labels, vocab.size());
  auto complete = filter_complete_rows(pl_all);
  if (complete.matrix.rows() == 0) fail(ErrorKind::Stage, "no pseudo-label rows with every teacher labeled");

  std::unordered_map<std::string, std::size_t> feature_row;
  for (std::size_t i = 0; i < all.size(); ++i) feature_row.emplace(all.sample_ids[i], i);
  std::vector<std::size_t> rows;
  for (const auto& id : complete.matrix.sample_ids()) {
    auto it = feature_row.find(id);
    if (it == feature_row.end()) fail(ErrorKind::Parse, "pseudo-label sample '" + id + "' has no feature row");
    rows.push_back(it->second);
  }
  const FeatureDataset train_set = all.select(rows);
  const auto part = partition(complete.matrix);
  log << "training rows " << train_set.size() << " (R " << part.count(Tag::R) << ", LR " << part.count(Tag::LR) << ", UR "
      << part.count(Tag::UR) << "), excluded " << complete.excluded.size() << '\n';

  std::vector<std::size_t> dims{all.dim()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(vocab.size());
  Student model(dims, cfg.seed);
  if (!cfg.init_checkpoint.empty()) {
    model = load_checkpoint<float>(cfg.init_checkpoint);
    if (model.dims() != dims) fail(ErrorKind::Config, "init checkpoint architecture does not match the run config");
  }

  CurriculumOptions<float> opts;
  opts.seed = cfg.seed;
  opts.augment = cfg.augment;
  opts.ties = cfg.ties;
  opts.checkpoint_dir = cfg.output_dir;
  if (all.true_labels) {
    opts.evaluate = [&all](const Student& m) -> std::optional<double> {
      return accuracy(predict(m, Matrix<float>(all.features)), *all.true_labels);
    };
  }
  fs::create_directories(cfg.output_dir);
  TrainingData data{train_set.unlabeled(), &complete.matrix, &part};
  TrainOutput out{model, {}, {}};
  out.reports = run_curriculum(out.model, data, cfg.stages, opts);
  save_checkpoint(cfg.output_dir + "/model.ckpt", out.model);

  auto& rep = out.report;
  rep["seed"] = cfg.seed;
  rep["training_rows"] = train_set.size();
  rep["excluded_rows"] = complete.excluded.size();
  rep["partition"] = {{"R", part.count(Tag::R)}, {"LR", part.count(Tag::LR)}, {"UR", part.count(Tag::UR)}};
  auto stages = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < out.reports.size(); ++k) {
    auto sj = report_json(out.reports[k]);
    sj["config"] = stage_config_json(cfg.stages[k]);
    stages.push_back(std::move(sj));
  }
  rep["stages"] = stages;
  if (train_set.true_labels) {
    rep["ensemble_accuracy"] = ensemble_baseline(complete.matrix, *train_set.true_labels, cfg.seed, cfg.ties);
    const auto rr = reliability_report(complete.matrix, part, *train_set.true_labels, cfg.seed, cfg.ties);
    rep["reliability"] = reliability_report_json(rr);
  }
  detail::write_atomic(cfg.output_dir + "/report.json", rep.dump(2) + "\n");
  detail::write_atomic(cfg.output_dir + "/timing.json", timing_json(out.reports).dump(2) + "\n");
  for (const auto& r : out.reports) {
    log << stage_name(r.stage) << ": subset " << r.subset_size << ", final loss " << r.final_loss;
    if (r.accuracy) log << ", accuracy " << *r.accuracy;
    log << ", " << r.wall_seconds << " s\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// eval

/// Accuracy of a checkpoint on a feature file. Labels come from `labels_path`
/// (one index per line) when given, otherwise from the CSV label column.
inline nlohmann::ordered_json eval_command(const std::string& checkpoint, const std::string& features_path, const std::string& labels_path) {
  const Student model = load_checkpoint<float>(checkpoint);
  const FeatureDataset ds = load_features(features_path);
  std::vector<int> truths;
  if (!labels_path.empty()) {
    std::ifstream in(labels_path);
    if (!in) fail(ErrorKind::Config, "cannot open labels: " + labels_path);
    truths = read_labels(in);
  } else if (ds.true_labels) {
    truths = *ds.true_labels;
  } else {
    fail(ErrorKind::Config, "eval needs labels: pass --labels or a features CSV with a label column");
  }
  if (truths.size() != ds.size()) fail(ErrorKind::Parse, "label count differs from feature rows");
  const auto preds = predict(model, Matrix<float>(ds.features));
  nlohmann::ordered_json j;
  j["samples"] = ds.size();
  j["accuracy"] = accuracy(preds, truths);
  return j;
}

}  // namespace rcl
