#pragma once

// Test-only reference computations. Deliberately naive and independent of
// the library code paths they check.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Ordered agreeing pairs by double loop.
inline std::int64_t agreements(std::span<const int> row) {
  std::int64_t n = 0;
  for (std::size_t m = 0; m < row.size(); ++m)
    for (std::size_t k = 0; k < row.size(); ++k)
      if (m != k && row[m] == row[k]) ++n;
  return n;
}

inline std::vector<std::uint8_t> union_mask(std::span<const int> row, std::size_t classes) {
  std::set<int> s(row.begin(), row.end());
  std::vector<std::uint8_t> bits(classes, 0);
  for (int c : s) bits[static_cast<std::size_t>(c)] = 1;
  return bits;
}

inline std::size_t distinct(std::span<const int> row) { return std::set<int>(row.begin(), row.end()).size(); }

inline std::map<int, int> counts(std::span<const int> row) {
  std::map<int, int> c;
  for (int v : row) ++c[v];
  return c;
}

/// Exact (unhashed) trigram multiset of lowercased, punctuation-free text.
inline std::map<std::string, int> trigrams(const std::string& text) {
  std::string t;
  for (unsigned char ch : text) {
    if (std::isalnum(ch))
      t.push_back(static_cast<char>(std::tolower(ch)));
    else if (!t.empty() && t.back() != ' ')
      t.push_back(' ');
  }
  while (!t.empty() && t.back() == ' ') t.pop_back();
  std::map<std::string, int> g;
  if (t.size() < 3) {
    if (!t.empty()) ++g[t];
    return g;
  }
  for (std::size_t i = 0; i + 3 <= t.size(); ++i) ++g[t.substr(i, 3)];
  return g;
}

inline double trigram_cosine(const std::string& a, const std::string& b) {
  const auto ga = trigrams(a), gb = trigrams(b);
  double dot = 0, na = 0, nb = 0;
  for (const auto& [k, v] : ga) {
    na += v * v;
    if (auto it = gb.find(k); it != gb.end()) dot += v * it->second;
  }
  for (const auto& [k, v] : gb) nb += v * v;
  return dot / std::sqrt(na * nb);
}

/// Masked-argmax refinement evaluated literally: argmax(z) if max z >= tau,
/// else argmax(z * m) with m the union of teacher one-hots. First index wins.
inline int refine(const std::vector<double>& z, std::span<const int> row, double tau) {
  const double p = *std::max_element(z.begin(), z.end());
  std::vector<double> v = z;
  if (p < tau) {
    const auto m = union_mask(row, z.size());
    for (std::size_t c = 0; c < z.size(); ++c) v[c] = z[c] * m[c];
  }
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Mean cross-entropy from raw logits via log-sum-exp.
template <typename M>
double logits_loss(const M& logits, std::span<const int> labels) {
  double total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (Eigen::Index c = 1; c < logits.cols(); ++c) mx = std::max(mx, static_cast<double>(logits(i, c)));
    double s = 0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) s += std::exp(static_cast<double>(logits(i, c)) - mx);
    total += -(static_cast<double>(logits(i, labels[static_cast<std::size_t>(i)])) - mx - std::log(s));
  }
  return total / static_cast<double>(logits.rows());
}

/// Max relative error of analytic gradients vs central differences.
template <typename Model, typename Params, typename X>
double gradient_check(Model model, const Params& analytic, const X& x, std::span<const int> labels, double h = 1e-4) {
  double worst = 0;
  auto& layers = model.parameters().layers;
  auto probe = [&](double& slot, double g) {
    const double keep = slot;
    slot = keep + h;
    const double up = logits_loss(model.logits(x), labels);
    slot = keep - h;
    const double down = logits_loss(model.logits(x), labels);
    slot = keep;
    const double fd = (up - down) / (2 * h);
    const double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-6});
    worst = std::max(worst, rel);
  };
  for (std::size_t k = 0; k < layers.size(); ++k) {
    for (Eigen::Index r = 0; r < layers[k].weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layers[k].weight.cols(); ++c) probe(layers[k].weight(r, c), analytic.layers[k].weight(r, c));
    for (Eigen::Index r = 0; r < layers[k].bias.size(); ++r) probe(layers[k].bias(r), analytic.layers[k].bias(r));
  }
  return worst;
}

}  // namespace oracle
