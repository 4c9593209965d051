#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "pmlc/train.hpp"

namespace pmlc {

// Flat key=value text config. Blank lines and '#' comments are skipped;
// unknown keys are rejected; later keys override earlier ones.
struct RunConfig {
  TrainConfig train;
  std::string data, embeddings, labels, out;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);  // parses back bit-identically
  return buf;
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw ConfigError("config: invalid count '" + value + "' for " + key);
  return static_cast<std::size_t>(v);
}

inline double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(value.c_str(), &end);
  if (errno != 0 || end == value.c_str() || *end != '\0')
    throw ConfigError("config: invalid number '" + value + "' for " + key);
  return v;
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  TrainConfig& t = cfg.train;
  ModelConfig& m = t.model;
  if (key == "n_labels") m.n_labels = detail::parse_size(key, value);
  else if (key == "d1") m.d1 = detail::parse_size(key, value);
  else if (key == "d2") m.d2 = detail::parse_size(key, value);
  else if (key == "d3") m.d3 = detail::parse_size(key, value);
  else if (key == "d4") m.d4 = detail::parse_size(key, value);
  else if (key == "gcn_layers") m.gcn_layers = detail::parse_size(key, value);
  else if (key == "u") m.u = detail::parse_double(key, value);
  else if (key == "binarize_tau") m.binarize_tau = detail::parse_double(key, value);
  else if (key == "leaky_slope") m.leaky_slope = detail::parse_double(key, value);
  else if (key == "variant") m.variant = parse_variant(value);
  else if (key == "fusion") m.fusion = parse_fusion_mode(value);
  else if (key == "epochs_max") t.epochs_max = detail::parse_size(key, value);
  else if (key == "patience") t.patience = detail::parse_size(key, value);
  else if (key == "batch_size") t.batch_size = detail::parse_size(key, value);
  else if (key == "lr") t.lr = detail::parse_double(key, value);
  else if (key == "seed") t.seed = detail::parse_size(key, value);
  else if (key == "folds") t.folds = detail::parse_size(key, value);
  else if (key == "split_num") t.split_num = detail::parse_size(key, value);
  else if (key == "split_den") t.split_den = detail::parse_size(key, value);
  else if (key == "m_max") t.m_max = detail::parse_size(key, value);
  else if (key == "jobs") t.jobs = detail::parse_size(key, value);
  else if (key == "data") cfg.data = value;
  else if (key == "embeddings") cfg.embeddings = value;
  else if (key == "labels") cfg.labels = value;
  else if (key == "out") cfg.out = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline void parse_config_text(RunConfig& cfg, const std::string& text,
                              const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t eq = line.find('=', start);
    if (eq == std::string::npos)
      throw ConfigError(origin + " line " + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    std::string key = line.substr(start, eq - start);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    const std::size_t vs = value.find_first_not_of(" \t");
    value = vs == std::string::npos ? "" : value.substr(vs);
    try {
      apply_config_entry(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg;
  parse_config_text(cfg, text.str(), path);
  return cfg;
}

// Training fields only (paths are run-local, not part of a model's identity).
inline std::string serialize_config(const TrainConfig& t) {
  const ModelConfig& m = t.model;
  std::ostringstream out;
  out << "n_labels=" << m.n_labels << '\n'
      << "d1=" << m.d1 << '\n'
      << "d2=" << m.d2 << '\n'
      << "d3=" << m.d3 << '\n'
      << "d4=" << m.d4 << '\n'
      << "gcn_layers=" << m.gcn_layers << '\n'
      << "u=" << detail::format_double(m.u) << '\n'
      << "binarize_tau=" << detail::format_double(m.binarize_tau) << '\n'
      << "leaky_slope=" << detail::format_double(m.leaky_slope) << '\n'
      << "variant=" << variant_name(m.variant) << '\n'
      << "fusion=" << fusion_mode_name(m.fusion) << '\n'
      << "epochs_max=" << t.epochs_max << '\n'
      << "patience=" << t.patience << '\n'
      << "batch_size=" << t.batch_size << '\n'
      << "lr=" << detail::format_double(t.lr) << '\n'
      << "seed=" << t.seed << '\n'
      << "folds=" << t.folds << '\n'
      << "split_num=" << t.split_num << '\n'
      << "split_den=" << t.split_den << '\n'
      << "m_max=" << t.m_max << '\n'
      << "jobs=" << t.jobs << '\n';
  return out.str();
}

inline TrainConfig parse_train_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  parse_config_text(cfg, text, origin);
  return cfg.train;
}

}  // namespace pmlc
