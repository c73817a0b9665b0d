// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

// Line-oriented transcript record:
//   PTHK-TRANSCRIPT 1
//   mode <parallel|sequential|replicated>
//   precision <fp32|fp64>
//   budgets <max_path_tokens> <max_summary_tokens>
//   sampling greedy | sampling top-k <k> <temperature> <seed>
//   reuse <0|1>
//   prompt <n> <ids...>
//   path <k> <n> <ids...>          once per path, k ascending
//   forced <k> <0/1 string>        path k, or "summary"
//   summary <n> <ids...>
//   forced summary <0/1 string>
//   stats <allocated> <shared> <prefill> <summary_prefill> <decode> <copied>
//   logits <k|summary> <offset> <vocab values...>   optional, %.17g
//   end

#pragma once

#include <iosfwd>
#include <string>

#include "pthk/engine.hpp"

namespace pthk {

std::string format_transcript(const Transcript& t, bool with_logits);
Transcript parse_transcript(const std::string& text);

}  // namespace pthk
