// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#include "pthk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "pthk/error.hpp"

namespace pthk {

namespace {

constexpr char kMagic[] = "PTHK1";
constexpr std::size_t kMagicLen = 5;
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::uint32_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw Error(std::string("checkpoint truncated while reading ") + what);
  }
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

NamedTensor tensor(std::string name, std::vector<std::uint64_t> dims,
                   const std::vector<double>& data) {
  return NamedTensor{std::move(name), std::move(dims), data};
}

}  // namespace

std::vector<NamedTensor> model_tensors(const ToyDecoder& model) {
  const ModelConfig& c = model.config();
  const DecoderWeights<double>& w = model.weights();
  const std::uint64_t dim = c.model_dim();
  const std::uint64_t vocab = c.vocab_size;
  const std::uint64_t ffn = c.ffn_dim;
  std::vector<NamedTensor> out;
  out.push_back(tensor("meta.config", {10},
                       {static_cast<double>(c.n_layers), static_cast<double>(c.n_heads),
                        static_cast<double>(c.head_dim), static_cast<double>(c.vocab_size),
                        static_cast<double>(c.ffn_dim), c.rope_base, c.norm_eps,
                        c.precision == Precision::kFp64 ? 1.0 : 0.0,
                        static_cast<double>(c.seed >> 32),
                        static_cast<double>(c.seed & 0xFFFFFFFFull)}));
  out.push_back(tensor("tok_embedding", {vocab, dim}, w.tok_embedding));
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back(tensor(p + "attn_norm", {dim}, L.attn_norm));
    out.push_back(tensor(p + "wq", {dim, dim}, L.wq));
    out.push_back(tensor(p + "wk", {dim, dim}, L.wk));
    out.push_back(tensor(p + "wv", {dim, dim}, L.wv));
    out.push_back(tensor(p + "wo", {dim, dim}, L.wo));
    out.push_back(tensor(p + "mlp_norm", {dim}, L.mlp_norm));
    out.push_back(tensor(p + "w_up", {ffn, dim}, L.w_up));
    out.push_back(tensor(p + "w_down", {dim, ffn}, L.w_down));
  }
  out.push_back(tensor("final_norm", {dim}, w.final_norm));
  out.push_back(tensor("unembedding", {vocab, dim}, w.unembedding));
  out.push_back(tensor("path_embeddings",
                       {static_cast<std::uint64_t>(kMaxPaths), c.head_dim},
                       w.path_embeddings));
  return out;
}

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, kMagicLen);
  for (const auto& t : tensors) {
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) throw ShapeError("tensor " + t.name + ": dims do not match data");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put<std::uint64_t>(out, d);
    for (double v : t.data) put<double>(out, v);
  }
  if (!out) throw Error("checkpoint write failed");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (in.gcount() != static_cast<std::streamsize>(kMagicLen) ||
      std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw Error("not a PTHK1 checkpoint");
  }
  std::vector<NamedTensor> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    NamedTensor t;
    const auto len = get<std::uint32_t>(in, "name length");
    if (len == 0 || len > kMaxNameLen) throw Error("checkpoint: bad tensor name length");
    t.name.resize(len);
    in.read(t.name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw Error("checkpoint truncated in name");
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > kMaxRank) throw Error("checkpoint: tensor " + t.name + " has rank " + std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(get<std::uint64_t>(in, "dims"));
      count *= t.dims.back();
      if (count > (1ull << 32)) throw Error("checkpoint: tensor " + t.name + " too large");
    }
    t.data.resize(count);
    for (auto& v : t.data) v = get<double>(in, t.name.c_str());
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const ToyDecoder& model, std::ostream& out) {
  write_tensors(out, model_tensors(model));
}

void save_checkpoint(const ToyDecoder& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  save_checkpoint(model, out);
}

ToyDecoder load_checkpoint(std::istream& in) {
  std::map<std::string, NamedTensor> by_name;
  for (auto& t : read_tensors(in)) {
    std::string name = t.name;
    if (!by_name.emplace(name, std::move(t)).second) {
      throw Error("checkpoint: duplicate tensor " + name);
    }
  }
  auto take = [&](const std::string& name) -> std::vector<double> {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint: missing tensor " + name);
    std::vector<double> data = std::move(it->second.data);
    by_name.erase(it);
    return data;
  };
  const std::vector<double> meta = take("meta.config");
  if (meta.size() != 10) throw Error("checkpoint: meta.config must hold 10 values");
  auto as_size = [](double v, const char* what) {
    if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw Error(std::string("checkpoint: bad ") + what);
    }
    return static_cast<std::size_t>(v);
  };
  ModelConfig c;
  c.n_layers = as_size(meta[0], "n_layers");
  c.n_heads = as_size(meta[1], "n_heads");
  c.head_dim = as_size(meta[2], "head_dim");
  c.vocab_size = as_size(meta[3], "vocab_size");
  c.ffn_dim = as_size(meta[4], "ffn_dim");
  c.rope_base = meta[5];
  c.norm_eps = meta[6];
  c.precision = meta[7] == 1.0 ? Precision::kFp64 : Precision::kFp32;
  c.seed = (static_cast<std::uint64_t>(as_size(meta[8], "seed")) << 32) |
           static_cast<std::uint64_t>(as_size(meta[9], "seed"));

  DecoderWeights<double> w;
  w.tok_embedding = take("tok_embedding");
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerWeights<double> L;
    L.attn_norm = take(p + "attn_norm");
    L.wq = take(p + "wq");
    L.wk = take(p + "wk");
    L.wv = take(p + "wv");
    L.wo = take(p + "wo");
    L.mlp_norm = take(p + "mlp_norm");
    L.w_up = take(p + "w_up");
    L.w_down = take(p + "w_down");
    w.layers.push_back(std::move(L));
  }
  w.final_norm = take("final_norm");
  w.unembedding = take("unembedding");
  w.path_embeddings = take("path_embeddings");
  if (!by_name.empty()) throw Error("checkpoint: unexpected tensor " + by_name.begin()->first);
  return ToyDecoder::from_weights(c, std::move(w));
}

ToyDecoder load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return load_checkpoint(in);
}

}  // namespace pthk
