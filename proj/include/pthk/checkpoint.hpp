// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container:
//   "PTHK1"
//   repeated until EOF:
//     u32 name_len, name bytes, u32 rank, rank x u64 dims,
//     prod(dims) x f64 row-major
// All integers and floats little-endian. A rank-1 tensor "meta.config"
// holds n_layers, n_heads, head_dim, vocab_size, ffn_dim, rope_base,
// norm_eps, precision (0 fp32, 1 fp64), seed_hi32, seed_lo32.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pthk/model.hpp"

namespace pthk {

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

std::vector<NamedTensor> model_tensors(const ToyDecoder& model);

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

void save_checkpoint(const ToyDecoder& model, std::ostream& out);
void save_checkpoint(const ToyDecoder& model, const std::string& path);
ToyDecoder load_checkpoint(std::istream& in);
ToyDecoder load_checkpoint(const std::string& path);

}  // namespace pthk
