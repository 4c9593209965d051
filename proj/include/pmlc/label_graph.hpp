#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/data.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

struct CoOccurrenceStats {
  std::vector<std::size_t> counts;       // #(j), per label
  std::vector<std::size_t> pair_counts;  // L×L, #(j,k); diagonal carries #(j)
  Tensor p;                              // L×L conditional frequencies

  std::size_t l() const { return counts.size(); }
};

// p_j^k = #(j,k)/#(j): of the samples carrying label j, the fraction that
// also carry k. Rows of labels that never occur are zero.
inline CoOccurrenceStats count_cooccurrence(const std::vector<Sample>& samples,
                                            std::size_t n_labels) {
  if (samples.empty()) throw InputError("co-occurrence: empty sample set");
  CoOccurrenceStats st;
  st.counts.assign(n_labels, 0);
  st.pair_counts.assign(n_labels * n_labels, 0);
  for (const Sample& s : samples) {
    for (std::size_t j = 0; j < n_labels; ++j) {
      if (s.labels[j] == 0.0) continue;
      ++st.counts[j];
      for (std::size_t k = 0; k < n_labels; ++k)
        if (s.labels[k] != 0.0) ++st.pair_counts[j * n_labels + k];
    }
  }
  st.p = Tensor::zeros({n_labels, n_labels});
  for (std::size_t j = 0; j < n_labels; ++j) {
    if (st.counts[j] == 0) continue;
    for (std::size_t k = 0; k < n_labels; ++k)
      st.p.at(j, k) = static_cast<double>(st.pair_counts[j * n_labels + k]) /
                      static_cast<double>(st.counts[j]);
  }
  return st;
}

// Same counting restricted to a subset of samples (e.g. one fold's training
// portion), so held-out samples never leak into the graph.
inline CoOccurrenceStats count_cooccurrence(const std::vector<Sample>& samples,
                                            const std::vector<std::size_t>& indices,
                                            std::size_t n_labels) {
  std::vector<Sample> subset;
  subset.reserve(indices.size());
  for (std::size_t i : indices) subset.push_back(samples.at(i));
  return count_cooccurrence(subset, n_labels);
}

// Diagonal 1−u; off-diagonal mass u shared across neighbors in proportion to
// their conditional frequency (rows with no co-occurrence stay zero there).
// Frequencies below tau are dropped first as noise.
inline Tensor revise_adjacency(const CoOccurrenceStats& stats, double u,
                               double binarize_tau = 0.0) {
  if (!(u > 0.0 && u < 1.0))
    throw ConfigError("adjacency: trade-off must be in (0,1), got " + std::to_string(u));
  const std::size_t n = stats.l();
  Tensor a = Tensor::zeros({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    a.at(j, j) = 1.0 - u;
    double denom = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      if (stats.p.at(j, k) >= binarize_tau) denom += stats.p.at(j, k);
    }
    if (denom == 0.0) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == j) continue;
      const double p = stats.p.at(j, k);
      if (p >= binarize_tau) a.at(j, k) = u * p / denom;
    }
  }
  return a;
}

// Layer widths chain d1 → d4 → … → 2d2: the last layer always lands on the
// encoder width, intermediates use the hidden width.
struct GcnParams {
  std::vector<Tensor> w;

  static GcnParams init(std::size_t n_layers, std::size_t d1, std::size_t d4,
                        std::size_t d2, Rng& rng) {
    if (n_layers < 1 || n_layers > 5)
      throw ConfigError("gcn: depth must be 1..5, got " + std::to_string(n_layers));
    GcnParams p;
    std::size_t width = d1;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::size_t next = l + 1 == n_layers ? 2 * d2 : d4;
      const double bound = 1.0 / std::sqrt(static_cast<double>(width));
      p.w.push_back(Tensor::uniform({width, next}, -bound, bound, rng).set_requires_grad());
      width = next;
    }
    return p;
  }

  void collect(std::vector<std::pair<std::string, Tensor>>& dst) const {
    for (std::size_t l = 0; l < w.size(); ++l)
      dst.emplace_back("gcn.w" + std::to_string(l), w[l]);
  }
};

// C⁰ = E_l (frozen); Cˡ⁺¹ = LeakyReLU(A·Cˡ·Wˡ). A carries no gradient.
inline Tensor gcn_forward(const Tensor& e_l, const Tensor& adjacency,
                          const GcnParams& params, double slope = 0.01) {
  if (adjacency.ndim() != 2 || adjacency.extent(0) != adjacency.extent(1) ||
      adjacency.extent(0) != e_l.extent(0))
    throw ShapeError("gcn: adjacency " + shape_str(adjacency.shape()) +
                     " does not match labels " + shape_str(e_l.shape()));
  Tensor c = e_l;
  for (const Tensor& w : params.w) c = leaky_relu(matmul(matmul(adjacency, c), w), slope);
  return c;
}

}  // namespace pmlc
