#pragma once

// Feed-forward softmax classifier with analytic gradients, Adam, and
// feature-space weak/strong augmentation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rcl/data.hpp"
#include "rcl/error.hpp"
#include "rcl/random.hpp"

namespace rcl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Weight (out x in) and bias (out) of one affine layer.
template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;
  Vector<Scalar> bias;
};

/// Parameter-shaped storage; also used for gradients and Adam moments.
template <typename Scalar>
struct Parameters {
  std::vector<Layer<Scalar>> layers;

  static Parameters zeros_like(const Parameters& p) {
    Parameters z;
    for (const auto& l : p.layers)
      z.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()), Vector<Scalar>::Zero(l.bias.size())});
    return z;
  }

  bool same_shape(const Parameters& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      if (layers[k].weight.rows() != o.layers[k].weight.rows() || layers[k].weight.cols() != o.layers[k].weight.cols() ||
          layers[k].bias.size() != o.layers[k].bias.size())
        return false;
    }
    return true;
  }

  void add_scaled(const Parameters& o, Scalar s) {
    if (!same_shape(o)) fail(ErrorKind::Shape, "parameter shapes differ");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      layers[k].weight += s * o.layers[k].weight;
      layers[k].bias += s * o.layers[k].bias;
    }
  }

  Scalar squared_norm() const {
    Scalar s = 0;
    for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return s;
  }
};

/// Rows sum to one; max-subtracted for stability.
template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p = p.array().colwise() / p.rowwise().sum().array();
  return p;
}

/// Dense network: ReLU on hidden layers, identity on the output.
template <typename Scalar>
class StudentModel {
 public:
  StudentModel() = default;

  /// dims = [d, h1, ..., C]; weights and biases uniform in +-1/sqrt(fan_in).
  StudentModel(std::vector<std::size_t> dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.size() < 2) fail(ErrorKind::Config, "student needs at least input and output dims");
    for (auto d : dims_)
      if (d == 0) fail(ErrorKind::Config, "student layer width must be positive");
    Rng rng = make_rng(seed, {stream::kInit});
    for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
      const auto in = static_cast<Eigen::Index>(dims_[k]), out = static_cast<Eigen::Index>(dims_[k + 1]);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Layer<Scalar> layer{Matrix<Scalar>(out, in), Vector<Scalar>(out)};
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = static_cast<Scalar>(u(rng));
      for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = static_cast<Scalar>(u(rng));
      params_.layers.push_back(std::move(layer));
    }
  }

  static StudentModel from_parameters(std::vector<std::size_t> dims, Parameters<Scalar> params) {
    StudentModel m;
    m.dims_ = std::move(dims);
    m.params_ = std::move(params);
    if (m.params_.layers.size() + 1 != m.dims_.size()) fail(ErrorKind::Shape, "layer count does not match dims");
    for (std::size_t k = 0; k < m.params_.layers.size(); ++k) {
      const auto& l = m.params_.layers[k];
      if (static_cast<std::size_t>(l.weight.cols()) != m.dims_[k] || static_cast<std::size_t>(l.weight.rows()) != m.dims_[k + 1] ||
          static_cast<std::size_t>(l.bias.size()) != m.dims_[k + 1])
        fail(ErrorKind::Shape, "layer " + std::to_string(k) + " shape does not match dims");
    }
    return m;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t classes() const { return dims_.back(); }
  const Parameters<Scalar>& parameters() const { return params_; }
  Parameters<Scalar>& parameters() { return params_; }

  Matrix<Scalar> logits(const Matrix<Scalar>& x) const {
    check_input(x);
    Matrix<Scalar> a = x;
    for (std::size_t k = 0; k < params_.layers.size(); ++k) {
      const auto& l = params_.layers[k];
      Matrix<Scalar> z = (a * l.weight.transpose()).rowwise() + l.bias.transpose();
      a = k + 1 < params_.layers.size() ? Matrix<Scalar>(z.cwiseMax(Scalar(0))) : std::move(z);
    }
    return a;
  }

  Matrix<Scalar> probabilities(const Matrix<Scalar>& x) const { return softmax<Scalar>(logits(x)); }

  /// Analytic gradient of mean cross-entropy over the batch. Output-layer
  /// delta is (softmax - onehot) / batch.
  Parameters<Scalar> gradients(const Matrix<Scalar>& x, std::span<const int> labels) const {
    check_input(x);
    if (static_cast<std::size_t>(x.rows()) != labels.size()) fail(ErrorKind::Shape, "label count differs from batch size");
    const std::size_t depth = params_.layers.size();
    std::vector<Matrix<Scalar>> acts{x};
    std::vector<Matrix<Scalar>> pre;
    for (std::size_t k = 0; k < depth; ++k) {
      const auto& l = params_.layers[k];
      pre.push_back((acts.back() * l.weight.transpose()).rowwise() + l.bias.transpose());
      if (k + 1 < depth) acts.push_back(pre.back().cwiseMax(Scalar(0)));
    }
    Matrix<Scalar> delta = softmax<Scalar>(pre.back());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      check_label(labels[i]);
      delta(static_cast<Eigen::Index>(i), labels[i]) -= Scalar(1);
    }
    delta /= static_cast<Scalar>(labels.size());

    Parameters<Scalar> g = Parameters<Scalar>::zeros_like(params_);
    for (std::size_t k = depth; k-- > 0;) {
      g.layers[k].weight = delta.transpose() * acts[k];
      g.layers[k].bias = delta.colwise().sum().transpose();
      if (k > 0) {
        Matrix<Scalar> back = delta * params_.layers[k].weight;
        delta = (pre[k - 1].array() > Scalar(0)).select(back, Scalar(0));
      }
    }
    return g;
  }

 private:
  void check_input(const Matrix<Scalar>& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim())
      fail(ErrorKind::Shape, "input has " + std::to_string(x.cols()) + " columns, model expects " + std::to_string(input_dim()));
  }
  void check_label(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= classes())
      fail(ErrorKind::Bounds, "label " + std::to_string(label) + " outside 0.." + std::to_string(classes() - 1));
  }

  std::vector<std::size_t> dims_;
  Parameters<Scalar> params_;
};

using Student = StudentModel<float>;

inline constexpr double kProbFloor = 1e-12;

/// Mean of -log p[label] over rows, with p clamped at 1e-12.
template <typename Scalar>
double cross_entropy(const Matrix<Scalar>& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) fail(ErrorKind::Shape, "label count differs from batch size");
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= probs.cols()) fail(ErrorKind::Bounds, "label " + std::to_string(labels[i]) + " out of range");
    const double p = static_cast<double>(probs(static_cast<Eigen::Index>(i), labels[i]));
    total -= std::log(std::max(p, kProbFloor));
  }
  return total / static_cast<double>(labels.size());
}

struct Confidence {
  double p = 0.0;
  int predicted = 0;
};

/// Max probability and its index (lowest index on exact ties).
template <typename Derived>
Confidence confidence_of(const Eigen::MatrixBase<Derived>& probs_row) {
  Confidence c{static_cast<double>(probs_row(0)), 0};
  for (Eigen::Index k = 1; k < probs_row.size(); ++k) {
    if (static_cast<double>(probs_row(k)) > c.p) c = {static_cast<double>(probs_row(k)), static_cast<int>(k)};
  }
  return c;
}

template <typename Scalar>
Confidence confidence(const StudentModel<Scalar>& model, const Matrix<Scalar>& x_row) {
  const Matrix<Scalar> p = model.probabilities(x_row);
  return confidence_of(p.row(0));
}

template <typename Scalar>
std::vector<int> predict(const StudentModel<Scalar>& model, const Matrix<Scalar>& x) {
  const Matrix<Scalar> p = model.probabilities(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = confidence_of(p.row(i)).predicted;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct OptimizerState {
  std::uint64_t step = 0;
  Parameters<Scalar> first;
  Parameters<Scalar> second;
  AdamConfig config;

  static OptimizerState for_model(const StudentModel<Scalar>& model, AdamConfig cfg) {
    return {0, Parameters<Scalar>::zeros_like(model.parameters()), Parameters<Scalar>::zeros_like(model.parameters()), cfg};
  }
};

/// Bias-corrected adaptive-moment update.
template <typename Scalar>
void optimizer_step(StudentModel<Scalar>& model, OptimizerState<Scalar>& state, const Parameters<Scalar>& grads) {
  auto& params = model.parameters();
  if (!params.same_shape(grads) || !params.same_shape(state.first) || !params.same_shape(state.second))
    fail(ErrorKind::Shape, "optimizer step with mismatched parameter shapes");
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(c.beta1), b2 = static_cast<Scalar>(c.beta2);
  const auto corr1 = static_cast<Scalar>(1.0 - std::pow(c.beta1, t));
  const auto corr2 = static_cast<Scalar>(1.0 - std::pow(c.beta2, t));
  const auto lr = static_cast<Scalar>(c.learning_rate), eps = static_cast<Scalar>(c.epsilon);
  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = (b2 * v.array() + (Scalar(1) - b2) * g.array().square()).matrix();
    theta.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    update(params.layers[k].weight, state.first.layers[k].weight, state.second.layers[k].weight, grads.layers[k].weight);
    update(params.layers[k].bias, state.first.layers[k].bias, state.second.layers[k].bias, grads.layers[k].bias);
  }
}

// ---------------------------------------------------------------------------
// Augmentation

enum class View { Weak, Strong };

struct AugmentPolicy {
  double sigma_weak = 0.05;
  double sigma_strong = 0.2;
  double p_drop = 0.1;

  void validate() const {
    if (!(sigma_weak >= 0.0 && sigma_weak <= sigma_strong))
      fail(ErrorKind::Config, "augmentation needs 0 <= sigma_weak <= sigma_strong");
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) fail(ErrorKind::Config, "augmentation p_drop must lie in [0,1]");
  }
};

/// Weak: + N(0, sigma_w^2). Strong: + N(0, sigma_s^2), then each entry zeroed
/// with probability p_drop. Noise is skipped entirely when sigma is zero.
template <typename Scalar>
void augment_row_inplace(Eigen::Ref<Matrix<Scalar>> row, const AugmentPolicy& policy, View view, Rng& rng) {
  const double sigma = view == View::Weak ? policy.sigma_weak : policy.sigma_strong;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index j = 0; j < row.cols(); ++j) row(0, j) += static_cast<Scalar>(noise(rng));
  }
  if (view == View::Strong && policy.p_drop > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index j = 0; j < row.cols(); ++j)
      if (unit(rng) < policy.p_drop) row(0, j) = Scalar(0);
  }
}

template <typename Scalar>
Matrix<Scalar> augment(const Matrix<Scalar>& x, const AugmentPolicy& policy, View view, Rng& rng) {
  policy.validate();
  Matrix<Scalar> out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) augment_row_inplace<Scalar>(out.row(i), policy, view, rng);
  return out;
}

/// Row k draws from a stream keyed by (seed, view, iteration, sample_index[k]),
/// so a view of a sample is reproducible regardless of batch composition.
template <typename Scalar>
Matrix<Scalar> augment_batch(const Matrix<Scalar>& x, std::span<const std::size_t> sample_index, const AugmentPolicy& policy,
                             View view, std::uint64_t seed, std::uint64_t iteration) {
  policy.validate();
  Matrix<Scalar> out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    Rng rng = make_rng(seed, {stream::kAugment, static_cast<std::uint64_t>(view), iteration,
                              static_cast<std::uint64_t>(sample_index[static_cast<std::size_t>(i)])});
    augment_row_inplace<Scalar>(out.row(i), policy, view, rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: "RCLM0001", u64 layer count L+1, u64 dims, then per layer the
// weight (row-major) and bias as little-endian f32.

inline constexpr std::array<char, 8> kModelMagic = {'R', 'C', 'L', 'M', '0', '0', '0', '1'};

template <typename Scalar>
void write_checkpoint(std::ostream& out, const StudentModel<Scalar>& model) {
  out.write(kModelMagic.data(), 8);
  detail::put_u64(out, model.dims().size());
  for (auto d : model.dims()) detail::put_u64(out, d);
  for (const auto& l : model.parameters().layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::put_f32(out, static_cast<float>(l.weight(r, c)));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::put_f32(out, static_cast<float>(l.bias(r)));
  }
}

template <typename Scalar = float>
StudentModel<Scalar> read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), 8) || magic != kModelMagic) fail(ErrorKind::Parse, "checkpoint offset 0: bad magic");
  std::uint64_t count = 0;
  if (!detail::get_u64(in, count) || count < 2 || count > 64) fail(ErrorKind::Parse, "checkpoint offset 8: bad layer count");
  std::vector<std::size_t> dims(count);
  for (auto& d : dims) {
    std::uint64_t v = 0;
    if (!detail::get_u64(in, v) || v == 0 || v > (1u << 24)) fail(ErrorKind::Parse, "checkpoint: bad layer dimension");
    d = static_cast<std::size_t>(v);
  }
  auto read_f32 = [&in]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::Parse, "checkpoint: truncated parameters");
    return detail::f32_from_le(b);
  };
  Parameters<Scalar> params;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const auto in_dim = static_cast<Eigen::Index>(dims[k]), out_dim = static_cast<Eigen::Index>(dims[k + 1]);
    Layer<Scalar> l{Matrix<Scalar>(out_dim, in_dim), Vector<Scalar>(out_dim)};
    for (Eigen::Index r = 0; r < out_dim; ++r)
      for (Eigen::Index c = 0; c < in_dim; ++c) l.weight(r, c) = static_cast<Scalar>(read_f32());
    for (Eigen::Index r = 0; r < out_dim; ++r) l.bias(r) = static_cast<Scalar>(read_f32());
    params.layers.push_back(std::move(l));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Parse, "checkpoint: trailing bytes after parameters");
  return StudentModel<Scalar>::from_parameters(std::move(dims), std::move(params));
}

/// Writes to `path.tmp` and renames over `path`.
template <typename Scalar>
void save_checkpoint(const std::string& path, const StudentModel<Scalar>& model) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Config, "cannot write checkpoint: " + tmp);
    write_checkpoint(out, model);
    if (!out) fail(ErrorKind::Config, "failed writing checkpoint: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar = float>
StudentModel<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot open checkpoint: " + path);
  return read_checkpoint<Scalar>(in);
}

}  // namespace rcl
