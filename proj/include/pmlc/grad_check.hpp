#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pmlc/tensor.hpp"

namespace pmlc {

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0;
  std::size_t checked = 0;

  bool ok(double tol) const { return max_rel_err < tol; }
};

// Central-difference check of d(loss)/d(param) against tape gradients.
// `loss_fn` must rebuild the forward pass from the current parameter values
// on every call. Relative error uses |a-n| / max(eps_floor, |a|+|n|).
//
// `coords_per_param` limits how many coordinates of each parameter are
// probed (0 = all); coordinates are taken evenly spaced so every region of
// the tensor is covered.
class GradChecker {
 public:
  GradChecker(std::vector<std::pair<std::string, Tensor>> params,
              std::function<Tensor()> loss_fn)
      : params_(std::move(params)), loss_fn_(std::move(loss_fn)) {}

  GradCheckReport run(double step = 1e-5, std::size_t coords_per_param = 0,
                      double eps_floor = 1e-8) {
    GradCheckReport report;

    for (auto& [name, p] : params_) p.zero_grad();
    {
      Tape tape;
      Tensor loss = loss_fn_();
      tape.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params_.size());
    for (auto& [name, p] : params_) {
      std::vector<double> g(p.numel(), 0.0);
      for (std::size_t i = 0; i < p.numel(); ++i) g[i] = p.grad_at(i);
      analytic.push_back(std::move(g));
    }

    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& [name, p] = params_[pi];
      const std::size_t n = p.numel();
      const std::size_t count =
          coords_per_param == 0 ? n : std::min(coords_per_param, n);
      for (std::size_t c = 0; c < count; ++c) {
        const std::size_t i = count == n ? c : c * n / count;
        const double saved = p.at(i);
        p.at(i) = saved + step;
        const double up = eval_untracked();
        p.at(i) = saved - step;
        const double down = eval_untracked();
        p.at(i) = saved;

        GradCheckEntry e;
        e.name = name;
        e.index = i;
        e.analytic = analytic[pi][i];
        e.numeric = (up - down) / (2.0 * step);
        e.rel_err = std::abs(e.analytic - e.numeric) /
                    std::max(eps_floor, std::abs(e.analytic) + std::abs(e.numeric));
        report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
        report.entries.push_back(std::move(e));
        ++report.checked;
      }
    }
    return report;
  }

 private:
  // forward pass with no tape active: nothing is recorded
  double eval_untracked() {
    Tensor loss = loss_fn_();
    return loss.at(0);
  }

  std::vector<std::pair<std::string, Tensor>> params_;
  std::function<Tensor()> loss_fn_;
};

}  // namespace pmlc
