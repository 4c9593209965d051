#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pmlc/data.hpp"
#include "pmlc/rng.hpp"

namespace pmlc {

// Deterministic corpus with planted keyword→label rules: every label owns
// keywords that appear iff the label does, so the mapping is fully learnable.
// Selected label pairs are planted to co-occur, giving the co-occurrence
// graph real structure. `noise` (0..1) is the probability that a pair sample
// keeps both labels but drops one partner's keywords — the dropped label then
// is only recoverable through the co-occurrence signal.
struct SyntheticSpec {
  std::size_t n_samples = 64;
  std::size_t n_labels = 8;
  std::size_t n_pairs = 2;        // labels (0,1), (2,3), ... co-occur
  std::size_t keywords_per_label = 2;
  std::size_t n_fillers = 16;
  std::size_t dim = 16;           // embedding width of the companion table
  double pair_fraction = 0.5;     // fraction of samples carrying a planted pair
  double noise = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  LabelVocabulary vocab;
  std::vector<Sample> samples;
  std::vector<std::string> words;       // every keyword and filler
  std::vector<double> vectors;          // |words| × dim
  std::size_t dim = 0;
  // generator-side bookkeeping, recorded while emitting
  std::vector<std::size_t> label_counts;
  double mean_labels_per_sample = 0;
};

namespace detail {

inline std::string synth_label_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "aspect%02zu", i);
  return buf;
}

inline std::string synth_keyword(std::size_t label, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "kw%02zu%c", label, static_cast<char>('a' + k));
  return buf;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_labels < 1) throw ConfigError("synthetic: need at least 1 label");
  if (spec.n_pairs * 2 > spec.n_labels)
    throw ConfigError("synthetic: " + std::to_string(spec.n_pairs) +
                      " pairs need " + std::to_string(spec.n_pairs * 2) + " labels, have " +
                      std::to_string(spec.n_labels));
  if (spec.noise < 0 || spec.noise > 1)
    throw ConfigError("synthetic: noise must be in [0,1]");
  if (spec.keywords_per_label < 1)
    throw ConfigError("synthetic: need at least 1 keyword per label");

  SyntheticCorpus out;
  std::vector<std::string> names;
  for (std::size_t l = 0; l < spec.n_labels; ++l)
    names.push_back(detail::synth_label_name(l));
  out.vocab = LabelVocabulary::from_names(names);
  out.dim = spec.dim;

  for (std::size_t l = 0; l < spec.n_labels; ++l)
    for (std::size_t k = 0; k < spec.keywords_per_label; ++k)
      out.words.push_back(detail::synth_keyword(l, k));
  for (std::size_t f = 0; f < spec.n_fillers; ++f)
    out.words.push_back("filler" + std::to_string(f));

  Rng vec_rng = Rng::substream(spec.seed, "synthetic-vectors");
  out.vectors.resize(out.words.size() * spec.dim);
  for (double& v : out.vectors) v = vec_rng.uniform(-1.0, 1.0);

  // label names are themselves words, embedded at the centroid of their
  // keywords, so label embeddings are distinct and semantically anchored
  for (std::size_t l = 0; l < spec.n_labels; ++l) {
    out.words.push_back(detail::synth_label_name(l));
    for (std::size_t j = 0; j < spec.dim; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < spec.keywords_per_label; ++k)
        sum += out.vectors[(l * spec.keywords_per_label + k) * spec.dim + j];
      out.vectors.push_back(sum / static_cast<double>(spec.keywords_per_label));
    }
  }

  Rng rng = Rng::substream(spec.seed, "synthetic-samples");
  out.label_counts.assign(spec.n_labels, 0);
  std::size_t total_positives = 0;

  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    Sample s;
    s.id = "syn-" + std::to_string(i);
    s.labels.assign(spec.n_labels, 0.0);

    std::vector<std::size_t> chosen;
    const bool pair_sample = spec.n_pairs > 0 && rng.unit() < spec.pair_fraction;
    if (pair_sample) {
      const std::size_t p = rng.index(spec.n_pairs);
      chosen = {2 * p, 2 * p + 1};
    } else {
      chosen = {rng.index(spec.n_labels)};
    }

    std::size_t muted = spec.n_labels;  // label whose keywords are withheld
    if (pair_sample && spec.noise > 0 && rng.unit() < spec.noise)
      muted = chosen[rng.index(2)];

    std::vector<std::string> tokens;
    for (std::size_t l : chosen) {
      s.labels[l] = 1.0;
      ++out.label_counts[l];
      ++total_positives;
      if (l == muted) continue;
      for (std::size_t k = 0; k < spec.keywords_per_label; ++k)
        tokens.push_back(detail::synth_keyword(l, k));
    }
    const std::size_t fill = 2 + rng.index(3);
    for (std::size_t f = 0; f < fill; ++f)
      tokens.push_back("filler" + std::to_string(rng.index(spec.n_fillers)));
    rng.shuffle(tokens);

    std::string text;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t) text += ' ';
      text += tokens[t];
    }
    s.text = std::move(text);
    s.tokens = std::move(tokens);
    out.samples.push_back(std::move(s));
  }
  out.mean_labels_per_sample =
      static_cast<double>(total_positives) / static_cast<double>(spec.n_samples);
  return out;
}

inline EmbeddingTable synthetic_table(const SyntheticCorpus& c) {
  return EmbeddingTable::from_rows(c.words, c.vectors, c.dim);
}

// corpus.jsonl + embeddings.txt + labels.txt + stats.json, byte-stable per seed
inline void write_synthetic(const SyntheticCorpus& c, const std::string& dir) {
  save_corpus(dir + "/corpus.jsonl", c.samples, c.vocab);
  c.vocab.save(dir + "/labels.txt");

  std::ofstream emb(dir + "/embeddings.txt");
  if (!emb) throw IoError("synthetic: cannot write " + dir + "/embeddings.txt");
  emb << c.words.size() << ' ' << c.dim << '\n';
  char buf[32];
  for (std::size_t w = 0; w < c.words.size(); ++w) {
    emb << c.words[w];
    for (std::size_t j = 0; j < c.dim; ++j) {
      std::snprintf(buf, sizeof buf, " %.6f", c.vectors[w * c.dim + j]);
      emb << buf;
    }
    emb << '\n';
  }

  std::ofstream stats(dir + "/stats.json");
  if (!stats) throw IoError("synthetic: cannot write " + dir + "/stats.json");
  nlohmann::json j;
  j["n_samples"] = c.samples.size();
  auto counts = nlohmann::json::object();
  for (std::size_t l = 0; l < c.vocab.size(); ++l)
    counts[c.vocab.name(l)] = c.label_counts[l];
  j["label_counts"] = counts;
  j["mean_labels_per_sample"] = c.mean_labels_per_sample;
  stats << j.dump(2) << '\n';
}

}  // namespace pmlc
