// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>

namespace gsifn {

struct MetricReport {
  double acc2_nn = 0, acc2_np = 0;
  double f1_nn = 0, f1_np = 0;
  double acc3 = 0, acc5 = 0, acc7 = 0;
  double mae = 0;
  /// Pearson correlation; empty when either side is constant.
  std::optional<double> corr;
  std::size_t count = 0;
  /// Samples entering the NP split (non-zero labels).
  std::size_t np_count = 0;

  std::string to_json() const;
};

/// Binary splits: NN is negative (< 0) vs non-negative (>= 0) over all
/// samples; NP is negative vs positive (> 0) with zero labels dropped. F1 is
/// support-weighted over the two classes. AccK rounds values clamped to the
/// K-class range half-to-even.
MetricReport msa_metrics(std::span<const double> preds, std::span<const double> labels);

/// Support-weighted binary F1 (positive class = true).
double weighted_f1(std::span<const bool> pred, std::span<const bool> truth);

}  // namespace gsifn
