#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "pmlc/fusion.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

// Sample-averaged ranking metrics; every field lies in [0,1].
struct MetricsReport {
  double avg_prec = 0.0;
  double one_err = 0.0;
  double s_at_1 = 0.0, s_at_3 = 0.0, s_at_5 = 0.0;
  double p_at_1 = 0.0, p_at_3 = 0.0, p_at_5 = 0.0;
};

inline constexpr std::array<const char*, 8> kMetricNames = {
    "avg_prec", "one_err", "s_at_1", "s_at_3", "s_at_5",
    "p_at_1",   "p_at_3",  "p_at_5"};

inline std::array<double, 8> metric_values(const MetricsReport& r) {
  return {r.avg_prec, r.one_err, r.s_at_1, r.s_at_3, r.s_at_5,
          r.p_at_1,   r.p_at_3,  r.p_at_5};
}

// Rankings order labels by descending score, ties by ascending label index.
// Per sample: One-err = 1[top-1 not in truth]; S@K = 1[top-K hits truth];
// P@K = |top-K ∩ truth| / K; Avg-prec averages, over the truth labels, the
// fraction of labels at or above each truth label's rank that are themselves
// truth. Truth entries must be exactly 0 or 1 with at least one positive per
// row. Accumulation order is fixed (ascending label, then ascending sample)
// so repeated runs are bit-identical.
inline MetricsReport compute_metrics(const std::vector<std::vector<double>>& scores,
                                     const std::vector<std::vector<double>>& truth) {
  if (scores.empty()) throw InputError("metrics require at least one sample");
  if (scores.size() != truth.size())
    throw ShapeError("scores have " + std::to_string(scores.size()) +
                     " rows but truth has " + std::to_string(truth.size()));
  const std::size_t n = scores.size();
  const std::size_t l = scores.front().size();
  if (l == 0) throw InputError("metrics require at least one label");

  MetricsReport sum;
  for (std::size_t i = 0; i < n; ++i) {
    if (scores[i].size() != l || truth[i].size() != l)
      throw ShapeError("ragged row " + std::to_string(i) + " in metrics input");

    std::vector<std::size_t> positives;
    for (std::size_t j = 0; j < l; ++j) {
      if (truth[i][j] != 0.0 && truth[i][j] != 1.0)
        throw InputError("truth must be 0/1, got " + std::to_string(truth[i][j]) +
                         " in row " + std::to_string(i));
      if (truth[i][j] == 1.0) positives.push_back(j);
    }
    if (positives.empty())
      throw InputError("truth row " + std::to_string(i) + " has no positive label");

    const std::vector<std::size_t> order = rank_labels(scores[i]);
    std::vector<std::size_t> rank(l);  // 1-based rank per label
    for (std::size_t pos = 0; pos < l; ++pos) rank[order[pos]] = pos + 1;

    const auto hits_in_top = [&](std::size_t k) {
      std::size_t hits = 0;
      for (std::size_t pos = 0; pos < std::min(k, l); ++pos)
        hits += truth[i][order[pos]] == 1.0;
      return hits;
    };

    sum.one_err += truth[i][order[0]] == 1.0 ? 0.0 : 1.0;
    sum.s_at_1 += hits_in_top(1) > 0 ? 1.0 : 0.0;
    sum.s_at_3 += hits_in_top(3) > 0 ? 1.0 : 0.0;
    sum.s_at_5 += hits_in_top(5) > 0 ? 1.0 : 0.0;
    sum.p_at_1 += static_cast<double>(hits_in_top(1)) / 1.0;
    sum.p_at_3 += static_cast<double>(hits_in_top(3)) / 3.0;
    sum.p_at_5 += static_cast<double>(hits_in_top(5)) / 5.0;

    double ap = 0.0;
    for (std::size_t label : positives) {
      std::size_t at_or_above = 0;
      for (std::size_t other : positives) at_or_above += rank[other] <= rank[label];
      ap += static_cast<double>(at_or_above) / static_cast<double>(rank[label]);
    }
    sum.avg_prec += ap / static_cast<double>(positives.size());
  }

  const double dn = static_cast<double>(n);
  return {sum.avg_prec / dn, sum.one_err / dn, sum.s_at_1 / dn,
          sum.s_at_3 / dn,   sum.s_at_5 / dn,  sum.p_at_1 / dn,
          sum.p_at_3 / dn,   sum.p_at_5 / dn};
}

}  // namespace pmlc
