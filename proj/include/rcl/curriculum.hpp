#pragma once

// Three-stage reliability curriculum: RKT on unanimous samples, SMKE on
// unanimous + partially agreed samples, MMR on everything.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcl/consensus.hpp"
#include "rcl/data.hpp"
#include "rcl/error.hpp"
#include "rcl/random.hpp"
#include "rcl/student.hpp"

namespace rcl {

enum class Stage { RKT, SMKE, MMR };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::RKT:
      return "RKT";
    case Stage::SMKE:
      return "SMKE";
    default:
      return "MMR";
  }
}

inline Stage parse_stage(const std::string& s) {
  if (s == "RKT") return Stage::RKT;
  if (s == "SMKE") return Stage::SMKE;
  if (s == "MMR") return Stage::MMR;
  fail(ErrorKind::Config, "unknown stage '" + s + "' (expected RKT, SMKE or MMR)");
}

inline constexpr double kDefaultLambdaCons = 0.5;
inline constexpr double kDefaultMmrTau = 0.95;

struct StageConfig {
  Stage stage = Stage::RKT;
  double learning_rate = 1e-4;
  std::optional<double> tau;
  std::size_t batch_size = 64;
  std::size_t max_iter = 1000;
  std::optional<double> lambda_cons;

  void validate() const {
    const std::string name = stage_name(stage);
    if (!(learning_rate > 0.0)) fail(ErrorKind::Config, name + ": learning_rate must be positive");
    if (batch_size == 0) fail(ErrorKind::Config, name + ": batch_size must be positive");
    if (max_iter == 0) fail(ErrorKind::Config, name + ": max_iter must be positive");
    if (stage != Stage::RKT) {
      if (!tau) fail(ErrorKind::Config, name + ": tau is required");
      // tau = 0 is accepted as the pure self-training endpoint.
      if (!(*tau >= 0.0 && *tau <= 1.0)) fail(ErrorKind::Config, name + ": tau must lie in [0,1]");
    }
    if (stage == Stage::MMR) {
      if (!lambda_cons) fail(ErrorKind::Config, name + ": lambda_cons is required");
      if (!(*lambda_cons >= 0.0)) fail(ErrorKind::Config, name + ": lambda_cons must be non-negative");
    }
  }
};

/// Reference stage settings for Office-Home-scale training.
inline std::vector<StageConfig> office_home_stages() {
  return {
      {Stage::RKT, 1e-4, std::nullopt, 64, 3000, std::nullopt},
      {Stage::SMKE, 1e-5, 0.7, 256, 5000, std::nullopt},
      {Stage::MMR, 1e-5, 0.95, 128, 5000, kDefaultLambdaCons},
  };
}

/// Exactly one config per stage, in RKT, SMKE, MMR order.
inline void validate_stage_sequence(std::span<const StageConfig> stages) {
  const Stage order[] = {Stage::RKT, Stage::SMKE, Stage::MMR};
  for (std::size_t k = 0; k < 3; ++k) {
    if (k >= stages.size() || stages[k].stage != order[k]) {
      const bool present = std::any_of(stages.begin(), stages.end(), [&](const StageConfig& s) { return s.stage == order[k]; });
      fail(ErrorKind::Config, present ? std::string("stage ") + stage_name(order[k]) + " is out of order"
                                      : std::string("missing stage config: ") + stage_name(order[k]));
    }
    stages[k].validate();
  }
  if (stages.size() > 3) fail(ErrorKind::Config, "more than three stage configs");
}

inline StageConfig parse_stage_config(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "stage config must be an object");
  StageConfig c;
  try {
    c.stage = parse_stage(j.at("stage").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.max_iter = j.at("max_iter").get<std::size_t>();
    if (j.contains("tau")) c.tau = j["tau"].get<double>();
    if (j.contains("lambda_cons")) c.lambda_cons = j["lambda_cons"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("stage config: ") + e.what());
  }
  if (c.stage == Stage::MMR && !c.lambda_cons) c.lambda_cons = kDefaultLambdaCons;
  return c;
}

inline nlohmann::ordered_json stage_config_json(const StageConfig& c) {
  nlohmann::ordered_json j;
  j["stage"] = stage_name(c.stage);
  j["learning_rate"] = c.learning_rate;
  if (c.tau) j["tau"] = *c.tau;
  j["batch_size"] = c.batch_size;
  j["max_iter"] = c.max_iter;
  if (c.lambda_cons) j["lambda_cons"] = *c.lambda_cons;
  return j;
}

// ---------------------------------------------------------------------------

/// Features aligned row-for-row with a complete pseudo-label matrix and its
/// partition. No ground truth is reachable from here.
struct TrainingData {
  UnlabeledView features;
  const PseudoLabelMatrix* labels;
  const ReliabilityPartition* partition;

  std::size_t size() const { return features.size(); }

  void validate() const {
    if (features.size() != labels->rows() || partition->size() != labels->rows())
      fail(ErrorKind::Config, "features, pseudo-labels and partition must have the same rows");
  }
};

/// Instrumentation filled in by the stage runners when supplied.
struct TrainTrace {
  std::vector<std::uint64_t> touches;  // per-sample batch appearances
  std::uint64_t student_labels = 0;    // SMKE: p >= tau
  std::uint64_t teacher_labels = 0;    // SMKE: p < tau, teacher mode used
  std::uint64_t masked_refinements = 0;
  std::uint64_t plain_refinements = 0;
  std::uint64_t refinements_outside_mask = 0;
  std::vector<int> last_smke_labels;   // per sample, -1 until consulted
  std::vector<int> last_smke_argmax;
  std::vector<int> last_smke_mode;

  void reset(std::size_t n) {
    *this = TrainTrace{};
    touches.assign(n, 0);
    last_smke_labels.assign(n, -1);
    last_smke_argmax.assign(n, -1);
    last_smke_mode.assign(n, -1);
  }
};

struct TrainReport {
  Stage stage = Stage::RKT;
  std::size_t subset_size = 0;
  std::size_t iterations = 0;
  double final_loss = 0.0;
  std::vector<std::pair<std::size_t, double>> loss_curve;  // every 50 iterations
  double wall_seconds = 0.0;
  std::optional<double> accuracy;
};

inline constexpr std::size_t kLossSampleEvery = 50;

/// Deterministic part of a report. Wall time is kept out so reruns compare
/// byte-for-byte; see timing_json.
inline nlohmann::ordered_json report_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["stage"] = stage_name(r.stage);
  j["subset_size"] = r.subset_size;
  j["iterations"] = r.iterations;
  j["final_loss"] = r.final_loss;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& [it, loss] : r.loss_curve) curve.push_back({{"iter", it}, {"loss", loss}});
  j["loss_curve"] = curve;
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  return j;
}

inline nlohmann::ordered_json timing_json(std::span<const TrainReport> reports) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : reports) j[stage_name(r.stage)] = r.wall_seconds;
  return j;
}

namespace detail {

/// Uniform minibatches over `pool`, reshuffled at every epoch start; the last
/// short batch of an epoch is kept.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> pool, Rng rng) : order_(std::move(pool)), pos_(order_.size()), rng_(std::move(rng)) {}

  std::vector<std::size_t> next(std::size_t batch) {
    if (pos_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    const std::size_t end = std::min(order_.size(), pos_ + batch);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_), order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_;
  Rng rng_;
};

template <typename Scalar>
Matrix<Scalar> gather_rows(const FeatureMatrix& x, std::span<const std::size_t> rows) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k)
    out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k])).template cast<Scalar>();
  return out;
}

inline void note_touches(TrainTrace* trace, std::span<const std::size_t> batch) {
  if (!trace) return;
  for (auto i : batch) ++trace->touches[i];
}

inline void record_loss(TrainReport& report, std::size_t iter, double loss) {
  report.final_loss = loss;
  if (iter % kLossSampleEvery == 0 || iter + 1 == report.iterations) report.loss_curve.emplace_back(iter, loss);
}

}  // namespace detail

/// SMKE label rule on precomputed probabilities: the student's argmax when its
/// confidence reaches tau, otherwise the teachers' mode.
template <typename Derived>
int smke_label_from_probs(const Eigen::MatrixBase<Derived>& probs_row, std::span<const int> row, double tau, Rng& rng,
                          TiePolicy ties = TiePolicy::Random) {
  const Confidence c = confidence_of(probs_row);
  return c.p >= tau ? c.predicted : mode_label(row, rng, ties);
}

template <typename Scalar>
int smke_label(const StudentModel<Scalar>& model, const Matrix<Scalar>& x_row, std::span<const int> row, double tau, Rng& rng,
               TiePolicy ties = TiePolicy::Random) {
  const Matrix<Scalar> p = model.probabilities(x_row);
  return smke_label_from_probs(p.row(0), row, tau, rng, ties);
}

/// Multi-hot refinement: plain argmax when max prob >= tau, otherwise argmax of
/// the probabilities restricted to classes some teacher predicted. Ties go to
/// the lowest index.
inline int mmr_refine(std::span<const double> probs, std::span<const int> row, double tau) {
  if (probs.empty()) fail(ErrorKind::Shape, "empty probability vector");
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  if (probs[best] >= tau) return static_cast<int>(best);
  const auto mask = multi_hot_mask(row, probs.size());
  int refined = -1;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (!mask[c]) continue;
    if (refined < 0 || probs[c] > probs[static_cast<std::size_t>(refined)]) refined = static_cast<int>(c);
  }
  return refined;
}

template <typename Scalar>
struct StageContext {
  const TrainingData& data;
  std::uint64_t seed;
  TiePolicy ties = TiePolicy::Random;
  TrainTrace* trace = nullptr;
};

inline void require_stage(const StageConfig& cfg, Stage s) {
  if (cfg.stage != s) fail(ErrorKind::Config, std::string("expected a ") + stage_name(s) + " config, got " + stage_name(cfg.stage));
  cfg.validate();
}

/// Cross-entropy on unanimously labeled samples only.
template <typename Scalar>
TrainReport run_rkt(StudentModel<Scalar>& model, const StageContext<Scalar>& ctx, const StageConfig& cfg) {
  require_stage(cfg, Stage::RKT);
  ctx.data.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto pool = ctx.data.partition->indices({Tag::R});
  if (pool.empty()) fail(ErrorKind::Stage, "RKT: no reliable (unanimous) samples; review teachers or thresholds");
  TrainReport report{Stage::RKT, pool.size(), cfg.max_iter};
  auto opt = OptimizerState<Scalar>::for_model(model, {cfg.learning_rate});
  detail::EpochSampler sampler(pool, make_rng(ctx.seed, {stream::kShuffle, static_cast<std::uint64_t>(Stage::RKT)}));
  std::vector<int> labels;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    const auto batch = sampler.next(cfg.batch_size);
    detail::note_touches(ctx.trace, batch);
    labels.clear();
    for (auto i : batch) labels.push_back(ctx.data.labels->at(i, 0));
    const Matrix<Scalar> x = detail::gather_rows<Scalar>(*ctx.data.features.features, batch);
    detail::record_loss(report, it, cross_entropy(model.probabilities(x), labels));
    optimizer_step(model, opt, model.gradients(x, labels));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Cross-entropy on R and LR samples with labels re-derived from the live
/// model at every batch.
template <typename Scalar>
TrainReport run_smke(StudentModel<Scalar>& model, const StageContext<Scalar>& ctx, const StageConfig& cfg) {
  require_stage(cfg, Stage::SMKE);
  ctx.data.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto pool = ctx.data.partition->indices({Tag::R, Tag::LR});
  if (pool.empty()) fail(ErrorKind::Stage, "SMKE: no reliable or less-reliable samples");
  TrainReport report{Stage::SMKE, pool.size(), cfg.max_iter};
  auto opt = OptimizerState<Scalar>::for_model(model, {cfg.learning_rate});
  detail::EpochSampler sampler(pool, make_rng(ctx.seed, {stream::kShuffle, static_cast<std::uint64_t>(Stage::SMKE)}));
  const double tau = *cfg.tau;
  std::vector<int> labels;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    const auto batch = sampler.next(cfg.batch_size);
    detail::note_touches(ctx.trace, batch);
    const Matrix<Scalar> x = detail::gather_rows<Scalar>(*ctx.data.features.features, batch);
    const Matrix<Scalar> probs = model.probabilities(x);
    labels.clear();
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t i = batch[k];
      const auto row = ctx.data.labels->row(i);
      const auto prow = probs.row(static_cast<Eigen::Index>(k));
      Rng rng = mode_rng(ctx.seed, i);
      const int label = smke_label_from_probs(prow, row, tau, rng, ctx.ties);
      labels.push_back(label);
      if (ctx.trace) {
        const Confidence c = confidence_of(prow);
        (c.p >= tau ? ctx.trace->student_labels : ctx.trace->teacher_labels) += 1;
        Rng again = mode_rng(ctx.seed, i);
        ctx.trace->last_smke_labels[i] = label;
        ctx.trace->last_smke_argmax[i] = c.predicted;
        ctx.trace->last_smke_mode[i] = mode_label(row, again, ctx.ties);
      }
    }
    detail::record_loss(report, it, cross_entropy(probs, labels));
    optimizer_step(model, opt, model.gradients(x, labels));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// One MMR objective evaluation on a batch: refined labels from the weak view,
/// loss = CE(weak) + lambda * CE(strong), and its gradient.
template <typename Scalar>
struct MmrBatch {
  std::vector<int> refined;
  double sup_loss = 0.0;
  double cons_loss = 0.0;
  Parameters<Scalar> grads;

  double loss(double lambda) const { return sup_loss + lambda * cons_loss; }
};

template <typename Scalar>
MmrBatch<Scalar> mmr_batch(const StudentModel<Scalar>& model, const Matrix<Scalar>& weak, const Matrix<Scalar>& strong,
                           const PseudoLabelMatrix& pl, std::span<const std::size_t> rows, double tau, double lambda,
                           TrainTrace* trace = nullptr) {
  MmrBatch<Scalar> out;
  const Matrix<Scalar> pw = model.probabilities(weak);
  std::vector<double> p(static_cast<std::size_t>(pw.cols()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (Eigen::Index c = 0; c < pw.cols(); ++c) p[static_cast<std::size_t>(c)] = static_cast<double>(pw(static_cast<Eigen::Index>(k), c));
    const auto row = pl.row(rows[k]);
    const int y = mmr_refine(p, row, tau);
    out.refined.push_back(y);
    if (trace) {
      const double top = *std::max_element(p.begin(), p.end());
      if (top >= tau) {
        ++trace->plain_refinements;
      } else {
        ++trace->masked_refinements;
        if (std::find(row.begin(), row.end(), y) == row.end()) ++trace->refinements_outside_mask;
      }
    }
  }
  const Matrix<Scalar> ps = model.probabilities(strong);
  out.sup_loss = cross_entropy(pw, out.refined);
  out.cons_loss = cross_entropy(ps, out.refined);
  out.grads = model.gradients(weak, out.refined);
  if (lambda != 0.0) out.grads.add_scaled(model.gradients(strong, out.refined), static_cast<Scalar>(lambda));
  return out;
}

/// Full-dataset refinement with weak/strong consistency.
template <typename Scalar>
TrainReport run_mmr(StudentModel<Scalar>& model, const StageContext<Scalar>& ctx, const StageConfig& cfg, const AugmentPolicy& policy) {
  require_stage(cfg, Stage::MMR);
  policy.validate();
  ctx.data.validate();
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> pool(ctx.data.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  if (pool.empty()) fail(ErrorKind::Stage, "MMR: empty dataset");
  TrainReport report{Stage::MMR, pool.size(), cfg.max_iter};
  auto opt = OptimizerState<Scalar>::for_model(model, {cfg.learning_rate});
  detail::EpochSampler sampler(pool, make_rng(ctx.seed, {stream::kShuffle, static_cast<std::uint64_t>(Stage::MMR)}));
  const double tau = *cfg.tau, lambda = *cfg.lambda_cons;
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    const auto batch = sampler.next(cfg.batch_size);
    detail::note_touches(ctx.trace, batch);
    const Matrix<Scalar> x = detail::gather_rows<Scalar>(*ctx.data.features.features, batch);
    const Matrix<Scalar> weak = augment_batch<Scalar>(x, batch, policy, View::Weak, ctx.seed, it);
    const Matrix<Scalar> strong = augment_batch<Scalar>(x, batch, policy, View::Strong, ctx.seed, it);
    auto step = mmr_batch(model, weak, strong, *ctx.data.labels, batch, tau, lambda, ctx.trace);
    detail::record_loss(report, it, step.loss(lambda));
    optimizer_step(model, opt, step.grads);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

template <typename Scalar>
using Evaluator = std::function<std::optional<double>(const StudentModel<Scalar>&)>;

template <typename Scalar>
struct CurriculumOptions {
  std::uint64_t seed = 0;
  AugmentPolicy augment;
  TiePolicy ties = TiePolicy::Random;
  std::string checkpoint_dir;  // empty: no checkpoints
  Evaluator<Scalar> evaluate;  // accuracy for reports, if ground truth exists
  TrainTrace* trace = nullptr;
};

inline std::string stage_checkpoint_name(Stage s) {
  switch (s) {
    case Stage::RKT:
      return "stage1_rkt.ckpt";
    case Stage::SMKE:
      return "stage2_smke.ckpt";
    default:
      return "stage3_mmr.ckpt";
  }
}

/// RKT -> SMKE -> MMR, each continuing from the previous stage's weights.
/// A checkpoint is written after every completed stage, so a failing stage
/// leaves earlier checkpoints in place.
template <typename Scalar>
std::vector<TrainReport> run_curriculum(StudentModel<Scalar>& model, const TrainingData& data, std::span<const StageConfig> stages,
                                        const CurriculumOptions<Scalar>& opts) {
  validate_stage_sequence(stages);
  opts.augment.validate();
  data.validate();
  StageContext<Scalar> ctx{data, opts.seed, opts.ties, opts.trace};
  std::vector<TrainReport> reports;
  for (const auto& cfg : stages) {
    TrainReport r;
    switch (cfg.stage) {
      case Stage::RKT:
        r = run_rkt(model, ctx, cfg);
        break;
      case Stage::SMKE:
        r = run_smke(model, ctx, cfg);
        break;
      case Stage::MMR:
        r = run_mmr(model, ctx, cfg, opts.augment);
        break;
    }
    if (opts.evaluate) r.accuracy = opts.evaluate(model);
    if (!opts.checkpoint_dir.empty()) save_checkpoint(opts.checkpoint_dir + "/" + stage_checkpoint_name(cfg.stage), model);
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace rcl
