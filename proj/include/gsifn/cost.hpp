// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gsifn/core/flops.hpp"
#include "gsifn/model.hpp"

namespace gsifn {

/// Named FLOP terms, e.g. "fusion.scores". Keys are "<scope>.<term>" with
/// term one of norm, projection, scores, softmax, mixing, ffn, conv,
/// recurrence, head.
struct FlopSheet {
  std::map<std::string, std::uint64_t> terms;

  void add(const std::string& key, std::uint64_t n) { terms[key] += n; }
  std::uint64_t total() const;
  /// Sum of the terms whose key ends with "." + term.
  std::uint64_t term(const std::string& term) const;
  void merge(const FlopSheet& other);
};

inline constexpr const char* kFlopConvention =
    "one multiply-accumulate = 2 flops (matmul, conv1d); softmax and layer-norm = 5 flops per element; "
    "elementwise ops, bias adds and activations are not counted; one forward pass of one sample";

/// One transformer stack: target length tq, source length ts (cross when
/// `cross`; a self stack has ts == tq and normalises once).
FlopSheet transformer_flops(const nn::TransformerConfig& cfg, std::size_t tq, std::size_t ts, bool cross,
                            const std::string& scope);

/// Fusion stage only (GsiT or the cross-modal baseline).
FlopSheet fusion_flops(const ModelConfig& cfg, const SegLengths& seg);
/// Whole model forward for one sample of lengths `seg`.
FlopSheet model_flops(const ModelConfig& cfg, const SegLengths& seg);

struct ParamReport {
  std::uint64_t total = 0;
  /// Keyed by the first two components of the parameter name ("gsit.forward").
  std::map<std::string, std::uint64_t> by_module;
};

ParamReport count_params(const ParamSet<float>& ps);

// Closed-form learnable-scalar counts, independent of any instantiated model.
std::uint64_t transformer_params(const nn::TransformerConfig& cfg);
std::uint64_t mlstm_params(const MlstmConfig& cfg);
std::uint64_t fusion_params(const ModelConfig& cfg);
std::uint64_t model_params(const ModelConfig& cfg);

struct CostReport {
  std::string model;
  SegLengths seg;
  ParamReport params;
  std::uint64_t fusion_params = 0;
  FlopSheet flops;
  std::uint64_t fusion_flops = 0;
  std::size_t transformer_stacks = 0;

  std::string to_json() const;
};

/// Instantiates the model to count parameters and evaluates the FLOP sheet.
CostReport cost_report(const ModelConfig& cfg, const SegLengths& seg);

/// Oracle: runs an eval-mode forward on zero inputs and tallies FLOPs inside
/// the tensor ops. `fusion_only` restricts the tally to the fusion stage.
FlopCounter instrumented_flops(const ModelConfig& cfg, const SegLengths& seg, bool fusion_only);

}  // namespace gsifn
