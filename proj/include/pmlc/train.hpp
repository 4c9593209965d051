#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pmlc/data.hpp"
#include "pmlc/label_graph.hpp"
#include "pmlc/metrics.hpp"
#include "pmlc/model.hpp"
#include "pmlc/rng.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed set of named parameters. Parameters with
// no gradient this step are treated as zero-gradient: their moments decay but
// a fresh optimizer leaves them bit-identical.
class Adam {
 public:
  explicit Adam(std::vector<std::pair<std::string, Tensor>> params,
                AdamConfig cfg = {})
      : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, t] : params_) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& [name, tensor] = params_[p];
      auto& values = tensor.values();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = tensor.grad_at(i);
        if (!std::isfinite(g))
          throw TrainingError("non-finite gradient in " + name + "[" +
                              std::to_string(i) + "]");
        m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
        v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
        const double m_hat = m_[p][i] / bc1;
        const double v_hat = v_[p][i] / bc2;
        values[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs_max = 100;
  std::size_t patience = 5;
  std::size_t batch_size = 64;
  double lr = 0.001;
  std::uint64_t seed = 1;
  std::size_t folds = 10;
  std::size_t split_num = 8;  // train:validation ratio within a fold
  std::size_t split_den = 1;
  std::size_t m_max = 64;
  std::size_t jobs = 1;

  void validate() const {
    model.validate();
    if (epochs_max == 0) throw ConfigError("epochs_max must be positive");
    if (patience == 0) throw ConfigError("patience must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (lr < 0.0) throw ConfigError("learning rate must not be negative");
    if (split_num == 0 || split_den == 0)
      throw ConfigError("split ratio parts must be positive");
    if (m_max == 0) throw ConfigError("m_max must be positive");
    if (jobs == 0) throw ConfigError("jobs must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch;  // 1-based
  double train_loss;  // equal-weight mean over the epoch's batch losses
  double val_avg_prec;
};

// Forward-only scores, row i aligned with indices[i].
inline std::vector<std::vector<double>> predict_scores(
    const ModelParams& params, const ModelConfig& cfg,
    const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
    const EmbeddingTable& table, std::size_t batch_size, std::size_t m_max) {
  if (indices.empty()) throw InputError("prediction requires at least one sample");
  std::vector<std::vector<double>> scores;
  scores.reserve(indices.size());
  for (const Batch& batch : make_batches(samples, indices, table, cfg.n_labels,
                                         batch_size, m_max, nullptr)) {
    BatchForward out = model_forward_batch(params, cfg, batch, table);
    for (const SampleForward& s : out.samples) scores.push_back(s.y_hat.values());
  }
  return scores;
}

inline MetricsReport evaluate_subset(const ModelParams& params,
                                     const ModelConfig& cfg,
                                     const std::vector<Sample>& samples,
                                     const std::vector<std::size_t>& indices,
                                     const EmbeddingTable& table,
                                     std::size_t batch_size, std::size_t m_max) {
  auto scores = predict_scores(params, cfg, samples, indices, table, batch_size, m_max);
  std::vector<std::vector<double>> truth;
  truth.reserve(indices.size());
  for (std::size_t i : indices) truth.push_back(samples[i].labels);
  return compute_metrics(scores, truth);
}

struct FoldOutcome {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 1-based epoch of the kept parameters
  double best_val_avg_prec = 0.0;
};

namespace detail {

inline std::vector<std::vector<double>> snapshot_values(
    const std::vector<std::pair<std::string, Tensor>>& named) {
  std::vector<std::vector<double>> snap;
  snap.reserve(named.size());
  for (const auto& [name, t] : named) snap.push_back(t.values());
  return snap;
}

inline void restore_values(std::vector<std::pair<std::string, Tensor>>& named,
                           const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < named.size(); ++i) named[i].second.values() = snap[i];
}

}  // namespace detail

// Trains `params` in place; on return they hold the snapshot of the epoch
// with the best validation Avg-prec. Stops early after `patience` epochs
// without strict improvement.
inline FoldOutcome train_fold(ModelParams& params, const TrainConfig& cfg,
                              const std::vector<Sample>& samples,
                              const std::vector<std::size_t>& train_idx,
                              const std::vector<std::size_t>& val_idx,
                              const EmbeddingTable& table, Rng& shuffle_rng) {
  if (train_idx.empty() || val_idx.empty())
    throw InputError("training requires nonempty train and validation splits");
  auto named = params.named();
  Adam optimizer(named, {.lr = cfg.lr});

  FoldOutcome outcome;
  std::vector<std::vector<double>> best = detail::snapshot_values(named);
  double best_val = -std::numeric_limits<double>::infinity();
  std::size_t stall = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
    auto batches = make_batches(samples, train_idx, table, cfg.model.n_labels,
                                cfg.batch_size, cfg.m_max, &shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      try {
        params.zero_grad();
        Tape tape;
        BatchForward out = model_forward_batch(params, cfg.model, batches[b], table);
        tape.backward(out.loss);
        loss_sum += out.loss.at(0);
        optimizer.step();
      } catch (const NumericError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b + 1) + ": " + e.what());
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b + 1) + ": " + e.what());
      }
    }
    const double train_loss = loss_sum / static_cast<double>(batches.size());

    MetricsReport val = evaluate_subset(params, cfg.model, samples, val_idx,
                                        table, cfg.batch_size, cfg.m_max);
    outcome.history.push_back({epoch, train_loss, val.avg_prec});

    if (val.avg_prec > best_val) {
      best_val = val.avg_prec;
      best = detail::snapshot_values(named);
      outcome.best_epoch = epoch;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      break;
    }
  }

  detail::restore_values(named, best);
  outcome.best_val_avg_prec = best_val;
  return outcome;
}

// One model trained on a single train/validation split of `indices`, with the
// co-occurrence graph built from the training side only.
struct TrainRun {
  ModelParams params;
  Tensor adjacency;
  FoldOutcome outcome;
  std::vector<std::size_t> train_idx, val_idx;
};

inline TrainRun train_single(const std::vector<Sample>& samples,
                             const LabelVocabulary& vocab,
                             const EmbeddingTable& table, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  Rng split_rng = Rng::substream(cfg.seed, "split");
  auto [train_idx, val_idx] = split_train(all, cfg.split_num, cfg.split_den, split_rng);

  auto stats = count_cooccurrence(samples, train_idx, vocab.size());
  Tensor adjacency = revise_adjacency(stats, cfg.model.u, cfg.model.binarize_tau);
  Tensor e_l = embed_labels(vocab, table);

  Rng init_rng = Rng::substream(cfg.seed, "init");
  TrainRun run{ModelParams::init(cfg.model, e_l, adjacency, init_rng), adjacency,
               {}, train_idx, val_idx};

  Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle");
  run.outcome = train_fold(run.params, cfg, samples, train_idx, val_idx, table,
                           shuffle_rng);
  return run;
}

struct FoldReport {
  std::size_t fold = 0;
  MetricsReport test;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Tensor adjacency;  // this fold's revised graph, for inspection
};

struct CvResult {
  std::vector<FoldReport> per_fold;
  MetricsReport mean;
};

inline MetricsReport mean_metrics(const std::vector<FoldReport>& reports) {
  MetricsReport sum;
  for (const FoldReport& r : reports) {
    auto v = metric_values(r.test);
    sum.avg_prec += v[0];
    sum.one_err += v[1];
    sum.s_at_1 += v[2];
    sum.s_at_3 += v[3];
    sum.s_at_5 += v[4];
    sum.p_at_1 += v[5];
    sum.p_at_3 += v[6];
    sum.p_at_5 += v[7];
  }
  const double n = static_cast<double>(reports.size());
  return {sum.avg_prec / n, sum.one_err / n, sum.s_at_1 / n, sum.s_at_3 / n,
          sum.s_at_5 / n,   sum.p_at_1 / n,  sum.p_at_3 / n, sum.p_at_5 / n};
}

// K-fold cross-validation: each fold builds its graph from its own training
// portion, splits that portion train:validation, trains, and evaluates on the
// held-out fold. Folds are independent, so `cfg.jobs` of them run in
// parallel; results are identical for any job count.
inline CvResult cross_validate(const std::vector<Sample>& samples,
                               const LabelVocabulary& vocab,
                               const EmbeddingTable& table, const TrainConfig& cfg) {
  cfg.validate();
  Rng fold_rng = Rng::substream(cfg.seed, "folds");
  auto folds = make_folds(samples.size(), cfg.folds, fold_rng);
  Tensor e_l = embed_labels(vocab, table);

  CvResult result;
  result.per_fold.resize(folds.size());
  std::vector<std::exception_ptr> failures(folds.size());

  auto run_fold = [&](std::size_t f) {
    try {
      auto stats = count_cooccurrence(samples, folds[f].train, vocab.size());
      Tensor adjacency = revise_adjacency(stats, cfg.model.u, cfg.model.binarize_tau);

      Rng split_rng = Rng::substream(cfg.seed, "split", f);
      auto [train_idx, val_idx] =
          split_train(folds[f].train, cfg.split_num, cfg.split_den, split_rng);

      Rng init_rng = Rng::substream(cfg.seed, "init", f);
      ModelParams params = ModelParams::init(cfg.model, e_l, adjacency, init_rng);

      Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle", f);
      FoldOutcome outcome =
          train_fold(params, cfg, samples, train_idx, val_idx, table, shuffle_rng);

      MetricsReport test = evaluate_subset(params, cfg.model, samples,
                                           folds[f].test, table, cfg.batch_size,
                                           cfg.m_max);
      result.per_fold[f] = {f, test, std::move(outcome.history),
                            outcome.best_epoch, adjacency};
    } catch (...) {
      failures[f] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(cfg.jobs, folds.size());
  if (workers <= 1) {
    for (std::size_t f = 0; f < folds.size(); ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t f = next.fetch_add(1); f < folds.size();
             f = next.fetch_add(1))
          run_fold(f);
      });
    for (auto& t : pool) t.join();
  }

  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (!failures[f]) continue;
    try {
      std::rethrow_exception(failures[f]);
    } catch (const std::exception& e) {
      throw TrainingError("fold " + std::to_string(f + 1) + ": " + e.what());
    }
  }

  result.mean = mean_metrics(result.per_fold);
  return result;
}

}  // namespace pmlc
