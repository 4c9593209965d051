#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "pmlc/config.hpp"
#include "pmlc/model.hpp"

namespace pmlc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Self-describing binary container: magic "PMLC", u32 version, the config as
// a length-prefixed key=value blob, the label vocabulary, then named tensors
// as little-endian 64-bit floats. Stores everything needed to reproduce an
// evaluation: trainable parameters plus the frozen label embeddings,
// adjacency, and the embedding fallback vector.
struct Checkpoint {
  TrainConfig config;
  LabelVocabulary vocab;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw ParseError("checkpoint has no tensor '" + name + "'");
  }
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw ParseError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_u64(in));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::uint32_t max_len) {
  const std::uint32_t len = get_u32(in);
  if (len > max_len) throw ParseError("checkpoint string length " +
                                      std::to_string(len) + " out of range");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw ParseError("checkpoint truncated");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write("PMLC", 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_string(out, serialize_config(cp.config));

  detail::put_u32(out, static_cast<std::uint32_t>(cp.vocab.size()));
  for (std::size_t i = 0; i < cp.vocab.size(); ++i)
    detail::put_string(out, cp.vocab.name(i));

  detail::put_u32(out, static_cast<std::uint32_t>(cp.tensors.size()));
  for (const auto& [name, t] : cp.tensors) {
    detail::put_string(out, name);
    detail::put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d = 0; d < t.ndim(); ++d) detail::put_u64(out, t.extent(d));
    for (double v : t.values()) detail::put_f64(out, v);
  }
  if (!out) throw IoError("write failed for checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "PMLC")
    throw ParseError(path + " is not a checkpoint file");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint version " + std::to_string(version) +
                     " unsupported (expected " +
                     std::to_string(kCheckpointVersion) + ")");

  Checkpoint cp;
  cp.config = parse_train_config(detail::get_string(in, 1u << 20), path);

  const std::uint32_t n_labels = detail::get_u32(in);
  if (n_labels == 0 || n_labels > (1u << 20))
    throw ParseError("checkpoint label count out of range");
  std::vector<std::string> names;
  names.reserve(n_labels);
  for (std::uint32_t i = 0; i < n_labels; ++i)
    names.push_back(detail::get_string(in, 1u << 16));
  cp.vocab = LabelVocabulary::from_names(names);

  const std::uint32_t n_tensors = detail::get_u32(in);
  if (n_tensors > (1u << 16)) throw ParseError("checkpoint tensor count out of range");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = detail::get_string(in, 1u << 12);
    const std::uint32_t ndim = detail::get_u32(in);
    if (ndim < 1 || ndim > 3)
      throw ParseError("checkpoint tensor '" + name + "' has rank " +
                       std::to_string(ndim));
    Shape shape(ndim);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint64_t e = detail::get_u64(in);
      if (e == 0 || e > (1ull << 32))
        throw ParseError("checkpoint tensor '" + name + "' has extent " +
                         std::to_string(e));
      shape[d] = static_cast<std::size_t>(e);
      numel *= shape[d];
    }
    std::vector<double> values(numel);
    for (double& v : values) v = detail::get_f64(in);
    cp.tensors.emplace_back(name, Tensor::from_values(shape, std::move(values)));
  }
  return cp;
}

inline Checkpoint make_checkpoint(const TrainConfig& cfg,
                                  const LabelVocabulary& vocab,
                                  const ModelParams& params,
                                  const std::vector<double>& oov) {
  Checkpoint cp;
  cp.config = cfg;
  cp.vocab = vocab;
  cp.tensors = params.named();
  cp.tensors.emplace_back("label_embeddings", params.e_l);
  cp.tensors.emplace_back("adjacency", params.adjacency);
  cp.tensors.emplace_back("embedding.oov",
                          Tensor::from_values({oov.size()}, oov));
  return cp;
}

// Rebuilds the full parameter set from a loaded checkpoint; every tensor the
// config implies must be present with its exact shape.
inline ModelParams params_from_checkpoint(const Checkpoint& cp) {
  cp.config.validate();
  Tensor e_l = cp.tensor("label_embeddings").clone();
  Tensor adjacency = cp.tensor("adjacency").clone();
  e_l.set_requires_grad(false);
  adjacency.set_requires_grad(false);

  Rng scratch(0);  // layout donor; every value is overwritten below
  ModelParams params = ModelParams::init(cp.config.model, e_l, adjacency, scratch);
  for (auto& [name, tensor] : params.named()) {
    const Tensor& stored = cp.tensor(name);
    if (stored.shape() != tensor.shape())
      throw ParseError("checkpoint tensor '" + name + "' has shape " +
                       shape_str(stored.shape()) + ", expected " +
                       shape_str(tensor.shape()));
    tensor.values() = stored.values();
  }
  return params;
}

inline std::vector<double> oov_from_checkpoint(const Checkpoint& cp) {
  return cp.tensor("embedding.oov").values();
}

}  // namespace pmlc
