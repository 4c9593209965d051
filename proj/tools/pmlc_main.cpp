// pmlc: multi-label privacy-aspect classifier over short texts.
// Subcommands cover the full lifecycle: synthesize or ingest a corpus, build
// the label graph, train with validation-based selection, evaluate, predict,
// and inspect what was learned.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "pmlc/checkpoint.hpp"
#include "pmlc/grad_check.hpp"
#include "pmlc/synthetic.hpp"
#include "pmlc/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pmlc;

namespace {

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing required ") + what);
  if (!fs::exists(path))
    throw IoError(std::string(what) + " not found: " + path);
}

fs::path ensure_out_dir(const std::string& out) {
  if (out.empty()) throw ConfigError("missing required output directory (--out)");
  fs::create_directories(out);
  return fs::path(out);
}

json metrics_json(const MetricsReport& r) {
  json j;
  auto v = metric_values(r);
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) j[kMetricNames[i]] = v[i];
  return j;
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out = "row        Avg-prec  One-err   S@1       S@3       S@5       P@1       P@3       P@5\n";
  char buf[160];
  for (const auto& [label, r] : rows) {
    auto v = metric_values(r);
    std::snprintf(buf, sizeof(buf),
                  "%-10s %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f\n",
                  label.c_str(), v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
    out += buf;
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_avg_prec\n";
  char buf[96];
  for (const EpochRecord& e : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e.epoch, e.train_loss,
                  e.val_avg_prec);
    out << buf;
  }
}

// Common path/override plumbing shared by the training-family subcommands.
struct CommonArgs {
  std::string config, data, embeddings, labels, out;
  std::uint64_t seed = 0;
  std::string variant, fusion;
  std::size_t gcn_layers = 0, jobs = 0;
  CLI::Option *seed_opt = nullptr, *variant_opt = nullptr, *fusion_opt = nullptr,
              *layers_opt = nullptr, *jobs_opt = nullptr;

  void attach(CLI::App* cmd, bool with_model_flags = true) {
    cmd->add_option("--config", config, "key=value config file");
    cmd->add_option("--data", data, "corpus JSONL");
    cmd->add_option("--embeddings", embeddings, "word vector text file");
    cmd->add_option("--labels", labels, "label vocabulary, one name per line");
    cmd->add_option("--out", out, "output directory");
    seed_opt = cmd->add_option("--seed", seed, "run seed");
    if (with_model_flags) {
      variant_opt = cmd->add_option("--variant", variant, "S, L, SG, LG, SL, or SLG");
      fusion_opt = cmd->add_option("--fusion", fusion, "gcn, dot-s, dot-l, or dot-sl");
      layers_opt = cmd->add_option("--gcn-layers", gcn_layers, "graph depth (1-5)");
    }
    jobs_opt = cmd->add_option("--jobs", jobs, "parallel fold workers");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config.empty()) cfg = load_config_file(config);
    if (!data.empty()) cfg.data = data;
    if (!embeddings.empty()) cfg.embeddings = embeddings;
    if (!labels.empty()) cfg.labels = labels;
    if (!out.empty()) cfg.out = out;
    if (seed_opt && *seed_opt) cfg.train.seed = seed;
    if (variant_opt && *variant_opt) cfg.train.model.variant = parse_variant(variant);
    if (fusion_opt && *fusion_opt) cfg.train.model.fusion = parse_fusion_mode(fusion);
    if (layers_opt && *layers_opt) cfg.train.model.gcn_layers = gcn_layers;
    if (jobs_opt && *jobs_opt) cfg.train.jobs = jobs;
    return cfg;
  }
};

struct LoadedData {
  LabelVocabulary vocab;
  std::vector<Sample> samples;
  EmbeddingTable table;
};

LoadedData load_inputs(const RunConfig& cfg, std::uint64_t seed) {
  require_file(cfg.labels, "label vocabulary (--labels)");
  require_file(cfg.data, "corpus (--data)");
  require_file(cfg.embeddings, "embeddings (--embeddings)");
  LoadedData d;
  d.vocab = LabelVocabulary::load(cfg.labels);
  d.samples = load_corpus(cfg.data, d.vocab);
  std::vector<std::string> warnings;
  d.table = EmbeddingTable::load(cfg.embeddings, 0, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << '\n';
  d.table.ensure_oov(seed);
  return d;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = args.resolve();
  const fs::path out = ensure_out_dir(cfg.out);
  LoadedData d = load_inputs(cfg, cfg.train.seed);
  if (cfg.train.model.n_labels != 0 && cfg.train.model.n_labels != d.vocab.size())
    throw ConfigError("config n_labels=" + std::to_string(cfg.train.model.n_labels) +
                      " but " + cfg.labels + " has " + std::to_string(d.vocab.size()) +
                      " labels");
  cfg.train.model.n_labels = d.vocab.size();
  if (cfg.train.model.d1 != d.table.dim())
    throw ConfigError("config d1=" + std::to_string(cfg.train.model.d1) +
                      " but embeddings have width " + std::to_string(d.table.dim()));
  cfg.train.validate();

  if (cfg.train.folds >= 2) {
    CvResult cv = cross_validate(d.samples, d.vocab, d.table, cfg.train);
    json folds = json::array();
    std::vector<std::pair<std::string, MetricsReport>> rows;
    for (const FoldReport& r : cv.per_fold) {
      json f = metrics_json(r.test);
      f["fold"] = r.fold + 1;
      f["best_epoch"] = r.best_epoch;
      folds.push_back(f);
      rows.emplace_back("fold " + std::to_string(r.fold + 1), r.test);
    }
    rows.emplace_back("mean", cv.mean);
    json cv_json{{"folds", folds}, {"mean", metrics_json(cv.mean)}};
    write_text(out / "cv_metrics.json", cv_json.dump(2) + "\n");
    write_text(out / "cv_metrics.txt", metrics_table(rows));
    std::cout << "cross-validation mean Avg-prec "
              << metric_values(cv.mean)[0] << " over " << cv.per_fold.size()
              << " folds\n";
  }

  TrainRun run = train_single(d.samples, d.vocab, d.table, cfg.train);
  write_history_csv(out / "history.csv", run.outcome.history);

  MetricsReport train_m =
      evaluate_subset(run.params, cfg.train.model, d.samples, run.train_idx,
                      d.table, cfg.train.batch_size, cfg.train.m_max);
  MetricsReport val_m =
      evaluate_subset(run.params, cfg.train.model, d.samples, run.val_idx,
                      d.table, cfg.train.batch_size, cfg.train.m_max);
  json m{{"train", metrics_json(train_m)},
         {"validation", metrics_json(val_m)},
         {"best_epoch", run.outcome.best_epoch},
         {"epochs_run", run.outcome.history.size()}};
  write_text(out / "metrics.json", m.dump(2) + "\n");

  save_checkpoint((out / "checkpoint.bin").string(),
                  make_checkpoint(cfg.train, d.vocab, run.params, d.table.oov()));
  std::cout << "trained " << run.outcome.history.size() << " epochs (best "
            << run.outcome.best_epoch << "), validation Avg-prec "
            << run.outcome.best_val_avg_prec << ", checkpoint "
            << (out / "checkpoint.bin").string() << '\n';
  return 0;
}

LoadedData load_for_checkpoint(const Checkpoint& cp, const RunConfig& cfg) {
  require_file(cfg.data, "corpus (--data)");
  require_file(cfg.embeddings, "embeddings (--embeddings)");
  LoadedData d;
  d.vocab = cp.vocab;
  if (!cfg.labels.empty()) {
    LabelVocabulary given = LabelVocabulary::load(cfg.labels);
    if (!(given == cp.vocab))
      throw InputError("label vocabulary in " + cfg.labels +
                       " does not match the checkpoint's");
  }
  d.samples = load_corpus(cfg.data, d.vocab);
  d.table = EmbeddingTable::load(cfg.embeddings);
  d.table.set_oov(oov_from_checkpoint(cp));
  if (d.table.dim() != cp.config.model.d1)
    throw InputError("embeddings width " + std::to_string(d.table.dim()) +
                     " does not match the checkpoint's d1");
  return d;
}

int cmd_evaluate(const std::string& checkpoint_path, const CommonArgs& args) {
  RunConfig cfg = args.resolve();
  require_file(checkpoint_path, "checkpoint");
  Checkpoint cp = load_checkpoint(checkpoint_path);
  LoadedData d = load_for_checkpoint(cp, cfg);
  ModelParams params = params_from_checkpoint(cp);

  MetricsReport r = evaluate_subset(params, cp.config.model, d.samples,
                                    all_indices(d.samples.size()), d.table,
                                    cp.config.batch_size, cp.config.m_max);
  json m{{"samples", d.samples.size()}, {"metrics", metrics_json(r)}};
  if (!cfg.out.empty()) {
    const fs::path out = ensure_out_dir(cfg.out);
    write_text(out / "metrics.json", m.dump(2) + "\n");
    write_text(out / "metrics.txt", metrics_table({{"all", r}}));
  }
  std::cout << m.dump(2) << '\n';
  return 0;
}

// Accepts a labeled/unlabeled JSONL corpus or a plain text file with one post
// per line; labels in the input are ignored.
std::vector<Sample> load_predict_input(const std::string& path,
                                       const LabelVocabulary& vocab) {
  require_file(path, "input (--data)");
  std::vector<Sample> samples;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Sample s;
    if (!line.empty() && line.front() == '{') {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
      }
      if (!j.contains("text") || !j["text"].is_string())
        throw ParseError(path + " line " + std::to_string(line_no) +
                         ": expected a \"text\" field");
      s.text = j["text"].get<std::string>();
      s.id = j.contains("id") && j["id"].is_string()
                 ? j["id"].get<std::string>()
                 : "line-" + std::to_string(line_no);
    } else {
      s.text = line;
      s.id = "line-" + std::to_string(line_no);
    }
    try {
      s.tokens = tokenize(s.text);
    } catch (const InputError& e) {
      throw InputError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    s.labels.assign(vocab.size(), 0.0);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw InputError(path + " has no usable input lines");
  return samples;
}

int cmd_predict(const std::string& checkpoint_path, const CommonArgs& args,
                std::size_t top_k) {
  RunConfig cfg = args.resolve();
  require_file(checkpoint_path, "checkpoint");
  require_file(cfg.embeddings, "embeddings (--embeddings)");
  Checkpoint cp = load_checkpoint(checkpoint_path);

  std::vector<Sample> samples = load_predict_input(cfg.data, cp.vocab);
  EmbeddingTable table = EmbeddingTable::load(cfg.embeddings);
  table.set_oov(oov_from_checkpoint(cp));
  if (table.dim() != cp.config.model.d1)
    throw InputError("embeddings width " + std::to_string(table.dim()) +
                     " does not match the checkpoint's d1");
  ModelParams params = params_from_checkpoint(cp);

  auto scores = predict_scores(params, cp.config.model, samples,
                               all_indices(samples.size()), table,
                               cp.config.batch_size, cp.config.m_max);

  std::ostream* dst = &std::cout;
  std::ofstream file;
  if (!cfg.out.empty()) {
    const fs::path out = ensure_out_dir(cfg.out);
    file.open(out / "predictions.jsonl");
    if (!file) throw IoError("cannot write " + (out / "predictions.jsonl").string());
    dst = &file;
  }
  const std::size_t k = top_k == 0 ? cp.vocab.size()
                                   : std::min(top_k, cp.vocab.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto order = rank_labels(scores[i]);
    json ranked = json::array();
    for (std::size_t pos = 0; pos < k; ++pos)
      ranked.push_back({{"label", cp.vocab.name(order[pos])},
                        {"score", scores[i][order[pos]]}});
    json line{{"id", samples[i].id}, {"ranking", ranked}};
    *dst << line.dump() << '\n';
  }
  return 0;
}

void write_matrix_csv(const fs::path& path, const Tensor& m,
                      const LabelVocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "label";
  for (std::size_t j = 0; j < vocab.size(); ++j) out << ',' << vocab.name(j);
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.name(i);
    for (std::size_t j = 0; j < vocab.size(); ++j) {
      std::snprintf(buf, sizeof(buf), ",%.17g", m.at(i, j));
      out << buf;
    }
    out << '\n';
  }
}

int cmd_build_graph(const CommonArgs& args) {
  RunConfig cfg = args.resolve();
  require_file(cfg.labels, "label vocabulary (--labels)");
  require_file(cfg.data, "corpus (--data)");
  const fs::path out = ensure_out_dir(cfg.out);

  LabelVocabulary vocab = LabelVocabulary::load(cfg.labels);
  std::vector<Sample> samples = load_corpus(cfg.data, vocab);
  CoOccurrenceStats stats = count_cooccurrence(samples, vocab.size());
  Tensor a = revise_adjacency(stats, cfg.train.model.u, cfg.train.model.binarize_tau);

  write_matrix_csv(out / "P.csv", stats.p, vocab);
  write_matrix_csv(out / "A.csv", a, vocab);
  std::cout << "graph over " << vocab.size() << " labels from "
            << samples.size() << " samples -> " << (out / "P.csv").string()
            << ", " << (out / "A.csv").string() << '\n';
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, double step, double tol,
                  std::size_t coords) {
  RunConfig cfg = args.resolve();
  TrainConfig& t = cfg.train;
  if (args.config.empty()) {
    // probe-sized model; finite differences over every coordinate stay cheap
    t.model.d1 = 8;
    t.model.d2 = 8;
    t.model.d3 = 5;
    t.model.d4 = 6;
  }
  if (t.model.n_labels == 0) t.model.n_labels = 4;
  t.model.validate();

  SyntheticSpec spec;
  spec.n_samples = 8;
  spec.n_labels = t.model.n_labels;
  spec.n_pairs = t.model.n_labels / 4;
  spec.keywords_per_label = 1;
  spec.n_fillers = 6;
  spec.dim = t.model.d1;

  // the graph path is piecewise-linear, so probes must stay clear of its
  // kinks: retry seeds until every pre-activation sits >5 steps away
  ModelParams params;
  Batch batch;
  EmbeddingTable table;
  double margin = 0.0;
  std::uint64_t seed = t.seed;
  for (int attempt = 0; attempt < 64; ++attempt, ++seed) {
    spec.seed = seed;
    SyntheticCorpus corpus = generate_synthetic(spec);
    table = synthetic_table(corpus);
    CoOccurrenceStats stats = count_cooccurrence(corpus.samples, spec.n_labels);
    Tensor adjacency = revise_adjacency(stats, t.model.u, t.model.binarize_tau);
    Tensor e_l = embed_labels(corpus.vocab, table);
    Rng init_rng = Rng::substream(seed, "init");
    params = ModelParams::init(t.model, e_l, adjacency, init_rng);

    auto batches = make_batches(corpus.samples, all_indices(2), table,
                                spec.n_labels, 2, t.m_max, nullptr);
    batch = batches.front();

    margin = 1e9;
    Tensor c = params.e_l;
    for (const Tensor& w : params.gcn.w) {
      Tensor pre = matmul(matmul(params.adjacency, c), w);
      for (double v : pre.values()) margin = std::min(margin, std::abs(v));
      c = leaky_relu(pre, t.model.leaky_slope);
    }
    if (margin > 5.0 * step) break;
  }
  if (margin <= 5.0 * step)
    throw NumericError("gradcheck: no well-conditioned fixture found; "
                       "try a different --seed or smaller --step");

  auto loss_fn = [&] {
    return model_forward_batch(params, t.model, batch, table).loss;
  };
  GradChecker checker(params.named(), loss_fn);
  GradCheckReport report = checker.run(step, coords);

  const bool ok = report.ok(tol);
  std::printf("gradcheck: %zu coordinates, max relative error %.3g "
              "(step %.1g, tolerance %.1g, seed %llu) -> %s\n",
              report.checked, report.max_rel_err, step, tol,
              static_cast<unsigned long long>(seed), ok ? "PASS" : "FAIL");
  if (!ok) {
    for (const GradCheckEntry& e : report.entries) {
      if (e.rel_err <= tol) continue;
      std::printf("  %s[%zu]: analytic %.9g numeric %.9g rel %.3g\n",
                  e.name.c_str(), e.index, e.analytic, e.numeric, e.rel_err);
    }
    return 1;
  }
  return 0;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& out) {
  const fs::path dir = ensure_out_dir(out);
  SyntheticCorpus corpus = generate_synthetic(spec);
  write_synthetic(corpus, dir.string());
  std::cout << "wrote " << corpus.samples.size() << " samples over "
            << corpus.vocab.size() << " labels to " << dir.string() << '\n';
  return 0;
}

std::string safe_filename(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
      c = '_';
  return s;
}

int cmd_dump_attention(const std::string& checkpoint_path, const CommonArgs& args,
                       std::size_t limit) {
  RunConfig cfg = args.resolve();
  require_file(checkpoint_path, "checkpoint");
  Checkpoint cp = load_checkpoint(checkpoint_path);
  LoadedData d = load_for_checkpoint(cp, cfg);
  ModelParams params = params_from_checkpoint(cp);
  const fs::path out = ensure_out_dir(cfg.out);

  std::vector<std::string> label_names;
  for (std::size_t l = 0; l < cp.vocab.size(); ++l)
    label_names.push_back(cp.vocab.name(l));

  const std::size_t n = limit == 0 ? d.samples.size()
                                   : std::min(limit, d.samples.size());
  std::size_t written = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto batches = make_batches(d.samples, {i}, d.table, cp.vocab.size(), 1,
                                cp.config.m_max, nullptr);
    BatchForward fwd = model_forward_batch(params, cp.config.model,
                                           batches.front(), d.table);
    const SampleForward& s = fwd.samples.front();
    std::vector<std::string> tokens = d.samples[i].tokens;
    if (tokens.size() > cp.config.m_max) tokens.resize(cp.config.m_max);

    const std::string stem = safe_filename(d.samples[i].id);
    if (s.a_s.defined()) {
      std::ofstream f(out / (stem + "-self.csv"));
      if (!f) throw IoError("cannot write attention CSV for " + d.samples[i].id);
      write_attention_csv(f, s.a_s, label_names, tokens);
      ++written;
    }
    if (s.a_l.defined()) {
      std::ofstream f(out / (stem + "-label.csv"));
      if (!f) throw IoError("cannot write attention CSV for " + d.samples[i].id);
      write_attention_csv(f, s.a_l, label_names, tokens);
      ++written;
    }
  }
  std::cout << "wrote " << written << " attention maps for " << n
            << " samples to " << out.string() << '\n';
  return 0;
}

int cmd_inspect(const std::string& checkpoint_path) {
  require_file(checkpoint_path, "checkpoint");
  Checkpoint cp = load_checkpoint(checkpoint_path);
  std::cout << "version " << kCheckpointVersion << '\n';
  std::cout << "labels (" << cp.vocab.size() << "):";
  for (std::size_t l = 0; l < cp.vocab.size(); ++l)
    std::cout << ' ' << cp.vocab.name(l);
  std::cout << "\n\n" << serialize_config(cp.config) << '\n';

  char buf[64];
  std::cout << "tensors (" << cp.tensors.size() << "):\n";
  for (const auto& [name, t] : cp.tensors) {
    double sum = 0.0, lo = t.at(0), hi = t.at(0);
    for (double v : t.values()) {
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::snprintf(buf, sizeof(buf), "  %-16s %-12s", name.c_str(),
                  shape_str(t.shape()).c_str());
    std::cout << buf << " sum " << sum << " min " << lo << " max " << hi << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-label privacy-aspect classifier"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train = app.add_subcommand("train", "train a model; checkpoint + metrics");
  train_args.attach(train);

  CommonArgs eval_args;
  std::string eval_cp;
  auto* evaluate = app.add_subcommand("evaluate", "score a labeled corpus");
  evaluate->add_option("checkpoint", eval_cp, "trained checkpoint")->required();
  eval_args.attach(evaluate, false);

  CommonArgs predict_args;
  std::string predict_cp;
  std::size_t top_k = 0;
  auto* predict = app.add_subcommand("predict", "rank labels for new posts");
  predict->add_option("checkpoint", predict_cp, "trained checkpoint")->required();
  predict->add_option("--top", top_k, "emit only the K best labels");
  predict_args.attach(predict, false);

  CommonArgs graph_args;
  auto* graph = app.add_subcommand("build-graph", "co-occurrence P.csv and revised A.csv");
  graph_args.attach(graph);

  CommonArgs grad_args;
  double gc_step = 1e-3, gc_tol = 1e-4;
  std::size_t gc_coords = 0;
  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "compare analytic gradients to finite differences");
  grad_args.attach(gradcheck);
  gradcheck->add_option("--step", gc_step, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "max allowed relative error");
  gradcheck->add_option("--coords", gc_coords, "coordinates per tensor (0 = all)");

  SyntheticSpec spec;
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("gen-synthetic", "deterministic keyword-rule corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--samples", spec.n_samples, "sample count");
  synth->add_option("--label-count", spec.n_labels, "label count");
  synth->add_option("--pairs", spec.n_pairs, "co-occurring label pairs");
  synth->add_option("--keywords", spec.keywords_per_label, "keywords per label");
  synth->add_option("--fillers", spec.n_fillers, "filler vocabulary size");
  synth->add_option("--dim", spec.dim, "embedding width");
  synth->add_option("--pair-fraction", spec.pair_fraction, "fraction with a pair");
  synth->add_option("--noise", spec.noise, "pair samples with a muted member");
  synth->add_option("--seed", synth_seed, "generator seed");

  CommonArgs attn_args;
  std::string attn_cp;
  std::size_t attn_limit = 0;
  auto* attn = app.add_subcommand("dump-attention", "per-sample attention CSVs");
  attn->add_option("checkpoint", attn_cp, "trained checkpoint")->required();
  attn->add_option("--limit", attn_limit, "samples to dump (0 = all)");
  attn_args.attach(attn, false);

  std::string inspect_cp;
  auto* inspect = app.add_subcommand("inspect-checkpoint", "print config and tensor stats");
  inspect->add_option("checkpoint", inspect_cp, "checkpoint to describe")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(train_args);
    if (*evaluate) return cmd_evaluate(eval_cp, eval_args);
    if (*predict) return cmd_predict(predict_cp, predict_args, top_k);
    if (*graph) return cmd_build_graph(graph_args);
    if (*gradcheck) return cmd_gradcheck(grad_args, gc_step, gc_tol, gc_coords);
    if (*synth) {
      spec.seed = synth_seed;
      return cmd_gen_synthetic(spec, synth_out);
    }
    if (*attn) return cmd_dump_attention(attn_cp, attn_args, attn_limit);
    if (*inspect) return cmd_inspect(inspect_cp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
