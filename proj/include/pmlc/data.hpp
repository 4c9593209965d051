#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pmlc/rng.hpp"
#include "pmlc/tensor.hpp"

namespace pmlc {

inline constexpr std::string_view kUserToken = "⟨user⟩";  // ⟨user⟩
inline constexpr std::string_view kUrlToken = "⟨url⟩";    // ⟨url⟩
inline constexpr std::string_view kPadToken = "⟨pad⟩";    // ⟨pad⟩

// Ordered label names; index order is fixed for a model's lifetime.
class LabelVocabulary {
 public:
  static LabelVocabulary from_names(std::vector<std::string> names) {
    LabelVocabulary v;
    for (auto& n : names) v.push_back(std::move(n));
    return v;
  }

  static LabelVocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("labels: cannot open " + path);
    LabelVocabulary v;
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      v.push_back(line);
    }
    if (v.size() == 0) throw InputError("labels: " + path + " lists no labels");
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("labels: cannot write " + path);
    for (const auto& n : names_) out << n << '\n';
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const LabelVocabulary& other) const { return names_ == other.names_; }

 private:
  void push_back(std::string name) {
    if (index_.count(name))
      throw InputError("labels: duplicate name '" + name + "'");
    index_.emplace(name, names_.size());
    names_.push_back(std::move(name));
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Sample {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<double> labels;  // length L, entries in {0,1}, at least one 1
};

namespace detail {

inline bool ascii_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

inline std::string strip_punct(std::string_view t) {
  std::size_t b = 0, e = t.size();
  while (b < e && ascii_punct(t[b])) ++b;
  while (e > b && ascii_punct(t[e - 1])) --e;
  return std::string(t.substr(b, e - b));
}

}  // namespace detail

// Lowercase, split on whitespace, map @mentions and URLs to sentinel tokens,
// strip leading/trailing punctuation from everything else, drop empties.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::string lower = text;
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::vector<std::string> out;
  std::istringstream words(lower);
  std::string w;
  while (words >> w) {
    if (w.size() > 1 && w[0] == '@') {
      out.emplace_back(kUserToken);
      continue;
    }
    if (w.starts_with("http://") || w.starts_with("https://") || w.starts_with("www.")) {
      out.emplace_back(kUrlToken);
      continue;
    }
    std::string stripped = detail::strip_punct(w);
    if (!stripped.empty()) out.push_back(std::move(stripped));
  }
  if (out.empty()) throw InputError("tokenize: text has no tokens: \"" + text + "\"");
  return out;
}

// One JSON object per line: text (string), labels (array of strings),
// id (optional string).
inline std::vector<Sample> load_corpus(const std::string& path,
                                       const LabelVocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("corpus: cannot open " + path);
  std::vector<Sample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string() ||
        !j.contains("labels") || !j["labels"].is_array())
      throw ParseError("corpus line " + std::to_string(lineno) +
                       ": expected object with text and labels");
    Sample s;
    s.text = j["text"].get<std::string>();
    s.id = j.contains("id") ? j["id"].get<std::string>() : "line-" + std::to_string(lineno);
    s.labels.assign(vocab.size(), 0.0);
    bool any = false;
    for (const auto& lj : j["labels"]) {
      if (!lj.is_string())
        throw ParseError("corpus line " + std::to_string(lineno) + ": non-string label");
      const std::string name = lj.get<std::string>();
      auto idx = vocab.find(name);
      if (!idx)
        throw InputError("corpus line " + std::to_string(lineno) + ": unknown label '" +
                         name + "'");
      s.labels[*idx] = 1.0;
      any = true;
    }
    if (!any)
      throw InputError("corpus line " + std::to_string(lineno) + ": sample has no labels");
    try {
      s.tokens = tokenize(s.text);
    } catch (const InputError&) {
      throw InputError("corpus line " + std::to_string(lineno) + ": text has no tokens");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

inline void save_corpus(const std::string& path, const std::vector<Sample>& samples,
                        const LabelVocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("corpus: cannot write " + path);
  for (const Sample& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["text"] = s.text;
    auto names = nlohmann::json::array();
    for (std::size_t l = 0; l < s.labels.size(); ++l)
      if (s.labels[l] != 0.0) names.push_back(vocab.name(l));
    j["labels"] = names;
    out << j.dump() << '\n';
  }
}

struct CorpusStats {
  std::size_t n_samples = 0;
  std::vector<std::size_t> label_counts;
  double mean_labels_per_sample = 0;
};

inline CorpusStats corpus_stats(const std::vector<Sample>& samples, std::size_t n_labels) {
  CorpusStats st;
  st.n_samples = samples.size();
  st.label_counts.assign(n_labels, 0);
  std::size_t total = 0;
  for (const Sample& s : samples)
    for (std::size_t l = 0; l < n_labels; ++l)
      if (s.labels[l] != 0.0) {
        ++st.label_counts[l];
        ++total;
      }
  st.mean_labels_per_sample =
      samples.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(samples.size());
  return st;
}

// Word vectors in the textual interchange format: optional "V d" header line,
// then one "word v1 ... vd" per line. Duplicate words: last wins (warned).
class EmbeddingTable {
 public:
  static EmbeddingTable load(const std::string& path, std::size_t expected_dim = 0,
                             std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("embeddings: cannot open " + path);
    EmbeddingTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string word;
      fields >> word;
      std::vector<double> vec;
      double v;
      while (fields >> v) vec.push_back(v);
      if (lineno == 1 && vec.size() == 1 && !word.empty() &&
          word.find_first_not_of("0123456789") == std::string::npos) {
        // "V d" header; sizes are advisory, content drives the table
        continue;
      }
      if (vec.empty())
        throw ParseError("embeddings line " + std::to_string(lineno) + ": no values");
      if (t.dim_ == 0) {
        t.dim_ = vec.size();
        if (expected_dim != 0 && t.dim_ != expected_dim)
          throw ParseError("embeddings: dimension " + std::to_string(t.dim_) +
                           " does not match expected " + std::to_string(expected_dim));
      } else if (vec.size() != t.dim_) {
        throw ParseError("embeddings line " + std::to_string(lineno) + ": dimension " +
                         std::to_string(vec.size()) + " does not match " +
                         std::to_string(t.dim_));
      }
      auto it = t.index_.find(word);
      if (it != t.index_.end()) {
        if (warnings)
          warnings->push_back("embeddings line " + std::to_string(lineno) +
                              ": duplicate word '" + word + "', last occurrence wins");
        std::copy(vec.begin(), vec.end(), t.data_.begin() + it->second * t.dim_);
      } else {
        t.index_.emplace(word, t.words_.size());
        t.words_.push_back(word);
        t.data_.insert(t.data_.end(), vec.begin(), vec.end());
      }
    }
    if (t.dim_ == 0) throw ParseError("embeddings: " + path + " holds no vectors");
    return t;
  }

  static EmbeddingTable from_rows(std::vector<std::string> words,
                                  std::vector<double> data, std::size_t dim) {
    EmbeddingTable t;
    t.dim_ = dim;
    t.data_ = std::move(data);
    for (auto& w : words) {
      t.index_.emplace(w, t.words_.size());
      t.words_.push_back(std::move(w));
    }
    if (t.data_.size() != t.words_.size() * dim)
      throw ShapeError("embeddings: data size does not match word count");
    return t;
  }

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& word(std::size_t i) const { return words_[i]; }

  std::optional<std::size_t> find(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  // single shared fallback vector for unseen words, drawn once per run seed
  void ensure_oov(std::uint64_t seed) {
    if (!oov_.empty()) return;
    Rng rng = Rng::substream(seed, "oov");
    oov_.resize(dim_);
    for (double& v : oov_) v = rng.uniform(-0.25, 0.25);
  }

  void set_oov(std::vector<double> vec) {
    if (vec.size() != dim_) throw ShapeError("embeddings: fallback vector length mismatch");
    oov_ = std::move(vec);
  }

  bool has_oov() const { return !oov_.empty(); }
  const std::vector<double>& oov() const {
    if (oov_.empty()) throw InputError("embeddings: fallback vector not initialized");
    return oov_;
  }

  std::span<const double> lookup(const std::string& word) const {
    auto idx = find(word);
    if (idx) return row(*idx);
    const auto& o = oov();
    return {o.data(), o.size()};
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> words_;
  std::vector<double> data_;
  std::size_t dim_ = 0;
  std::vector<double> oov_;
};

// Label name → mean of its words' vectors; unseen words contribute the
// shared fallback vector, so an all-unseen name maps to exactly that vector.
inline Tensor embed_labels(const LabelVocabulary& vocab, const EmbeddingTable& table) {
  Tensor e = Tensor::zeros({vocab.size(), table.dim()});
  for (std::size_t l = 0; l < vocab.size(); ++l) {
    auto words = tokenize(vocab.name(l));
    for (const auto& w : words) {
      auto vec = table.lookup(w);
      for (std::size_t j = 0; j < table.dim(); ++j) e.at(l, j) += vec[j];
    }
    for (std::size_t j = 0; j < table.dim(); ++j)
      e.at(l, j) /= static_cast<double>(words.size());
  }
  return e;
}

// ---------------------------------------------------------------------------
// folds and batches

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline std::vector<FoldSplit> make_folds(std::size_t n_samples, std::size_t k, Rng rng) {
  if (k < 2) throw ConfigError("folds: need at least 2, got " + std::to_string(k));
  if (k > n_samples)
    throw ConfigError("folds: " + std::to_string(k) + " folds exceed " +
                      std::to_string(n_samples) + " samples");
  std::vector<std::size_t> order = rng.permutation(n_samples);
  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t lo = f * n_samples / k, hi = (f + 1) * n_samples / k;
    for (std::size_t i = 0; i < n_samples; ++i)
      (i >= lo && i < hi ? folds[f].test : folds[f].train).push_back(order[i]);
  }
  return folds;
}

// num:den split (8:1 by default elsewhere): first n*num/(num+den) go to train
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train(
    std::vector<std::size_t> indices, std::size_t num, std::size_t den, Rng rng) {
  if (indices.size() < 2)
    throw ConfigError("split: need at least 2 samples, got " +
                      std::to_string(indices.size()));
  rng.shuffle(indices);
  const std::size_t n_train = indices.size() * num / (num + den);
  if (n_train == 0 || n_train == indices.size())
    throw ConfigError("split: ratio " + std::to_string(num) + ":" + std::to_string(den) +
                      " leaves an empty side for " + std::to_string(indices.size()) +
                      " samples");
  std::vector<std::size_t> train(indices.begin(), indices.begin() + n_train);
  std::vector<std::size_t> val(indices.begin() + n_train, indices.end());
  return {std::move(train), std::move(val)};
}

inline constexpr std::size_t kPadIndex = ~std::size_t{0};
inline constexpr std::size_t kOovIndex = ~std::size_t{0} - 1;

struct Batch {
  std::size_t b = 0, m = 0, l = 0;
  std::vector<std::size_t> tokens;   // b×m row-major; kPadIndex / kOovIndex sentinels
  std::vector<std::uint8_t> mask;    // b×m; 1 iff real token
  std::vector<double> labels;        // b×l
  std::vector<std::size_t> sample_indices;

  std::size_t token_at(std::size_t i, std::size_t j) const { return tokens[i * m + j]; }
  bool real(std::size_t i, std::size_t j) const { return mask[i * m + j] != 0; }
  std::vector<std::uint8_t> mask_row(std::size_t i) const {
    return {mask.begin() + i * m, mask.begin() + (i + 1) * m};
  }
};

// Sequences are truncated to m_max, then padded to the longest sequence in
// their batch. Pass a null rng to keep the given order (evaluation).
inline std::vector<Batch> make_batches(const std::vector<Sample>& samples,
                                       std::vector<std::size_t> indices,
                                       const EmbeddingTable& table, std::size_t n_labels,
                                       std::size_t batch_size, std::size_t m_max,
                                       Rng* rng) {
  if (batch_size < 1) throw ConfigError("batches: batch size must be at least 1");
  if (m_max < 1) throw ConfigError("batches: sequence cap must be at least 1");
  if (rng) rng->shuffle(indices);
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, indices.size() - start);
    std::size_t m = 0;
    for (std::size_t i = 0; i < b; ++i)
      m = std::max(m, std::min(m_max, samples[indices[start + i]].tokens.size()));
    Batch batch;
    batch.b = b;
    batch.m = m;
    batch.l = n_labels;
    batch.tokens.assign(b * m, kPadIndex);
    batch.mask.assign(b * m, 0);
    batch.labels.assign(b * n_labels, 0.0);
    batch.sample_indices.assign(indices.begin() + start, indices.begin() + start + b);
    for (std::size_t i = 0; i < b; ++i) {
      const Sample& s = samples[indices[start + i]];
      const std::size_t len = std::min(m_max, s.tokens.size());
      for (std::size_t j = 0; j < len; ++j) {
        auto idx = table.find(s.tokens[j]);
        batch.tokens[i * m + j] = idx ? *idx : kOovIndex;
        batch.mask[i * m + j] = 1;
      }
      for (std::size_t l = 0; l < n_labels; ++l) batch.labels[i * n_labels + l] = s.labels[l];
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace pmlc
