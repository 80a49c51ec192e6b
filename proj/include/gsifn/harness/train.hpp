// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsifn/cost.hpp"
#include "gsifn/harness/config.hpp"
#include "gsifn/harness/synth.hpp"
#include "gsifn/metrics.hpp"

namespace gsifn {

struct EpochLog {
  std::size_t epoch = 0;
  std::array<double, 4> loss{};  // L_m, L_t, L_v, L_a (sample-weighted means)
  double total = 0.0;
  MetricReport val;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  MetricReport best_val;
  MetricReport test;
  bool early_stopped = false;
};

/// Fixed CSV header of the per-epoch log.
inline constexpr const char* kEpochCsvHeader =
    "epoch,loss,loss_m,loss_t,loss_v,loss_a,val_mae,val_acc2_nn,val_acc2_np,val_f1_nn,val_f1_np,val_acc7,val_corr";

/// Trains per the config and writes the run directory:
///   config.json, cost.json, log.csv, metrics.json,
///   checkpoint/{params.bin, model.json, labels.json, centers.json}.
/// The checkpoint holds the best-validation epoch. A non-finite loss aborts
/// with diagnostic.json written next to the log.
TrainResult train(const RunConfig& cfg, const std::filesystem::path& run_dir);

/// Same, on samples already in memory.
TrainResult train(const RunConfig& cfg, const std::vector<Sample>& data, const std::filesystem::path& run_dir);

/// Eval-mode predictions (dropout off), batched in the given order.
std::vector<double> predict(const Model& model, const ParamSet<float>& ps, const std::vector<const Sample*>& samples,
                            std::size_t batch_size);

MetricReport evaluate(const Model& model, const ParamSet<float>& ps, const std::vector<const Sample*>& samples,
                      std::size_t batch_size);

/// Loads a checkpoint directory and evaluates it on a dataset. The model
/// section of `cfg` must match the checkpoint's.
MetricReport evaluate_checkpoint(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                 const std::vector<Sample>& data);

struct AblationRow {
  StructureId structure;
  TrainResult result;
  CostReport cost;
};

/// Trains each structure with the shared config/seed; writes ablation.csv in
/// out_dir and one run directory per structure.
std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<StructureId>& structures,
                                const std::filesystem::path& out_dir);

void save_params(const std::filesystem::path& path, const ParamSet<float>& ps);
/// Overwrites values in `ps` by name; names and shapes must match exactly.
void load_params(const std::filesystem::path& path, ParamSet<float>& ps);

/// Model-shape portion of the config, as stored in the checkpoint.
std::string model_signature(const RunConfig& cfg);

std::vector<const Sample*> select_split(const std::vector<Sample>& data, Split split);

}  // namespace gsifn
