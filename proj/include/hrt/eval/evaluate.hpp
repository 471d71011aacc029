// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>

#include "hrt/data/corpus.hpp"
#include "hrt/eval/metrics.hpp"
#include "hrt/model/language_model.hpp"

namespace hrt {

struct EvalOptions {
  Index batch_size = 1;
  /// Window length; 0 uses the model's bptt_len.
  Index bptt = 0;
  /// Attention length; 0 uses the model's eval_attn_len.
  Index attn_length = 0;
  /// Score only the first max_tokens targets; 0 scores the whole split.
  std::int64_t max_tokens = 0;
  /// Optional per-token dump: "offset,target,nll_nats" rows.
  std::ostream* token_dump = nullptr;
};

/// Scores every target of `corpus` exactly once in eval mode, windows of
/// `bptt` with carried state. Deterministic; the model's eval attention
/// length is restored afterwards.
template <typename T>
EvalReport evaluate(LanguageModel<T>& model, const Corpus& corpus, const EvalOptions& options = {});

extern template EvalReport evaluate<float>(LanguageModel<float>&, const Corpus&, const EvalOptions&);
extern template EvalReport evaluate<double>(LanguageModel<double>&, const Corpus&, const EvalOptions&);

}  // namespace hrt
