// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "gsifn/core/adam.hpp"
#include "gsifn/model.hpp"
#include "gsifn/ulgm.hpp"

namespace gsifn {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  /// Per group: text, vision, audio, other.
  std::array<double, 4> lr{5e-5, 5e-5, 5e-5, 5e-4};
  std::array<double, 4> weight_decay{1e-3, 1e-3, 1e-3, 1e-3};
  /// Stop once validation MAE falls below this value (0 disables).
  double early_stop_mae = 0.0;
  /// Single-threaded, fixed-order execution. The engine has no parallel
  /// paths, so this only documents the contract in the snapshot.
  bool bit_exact = true;
};

struct RunConfig {
  ModelConfig model;
  UlgmConfig ulgm;
  TrainConfig train;
  DropoutPosition dropout_position = DropoutPosition::post_softmax;
  std::uint64_t seed = 0;
  /// Dataset manifest; relative paths resolve against the config file.
  std::string manifest;

  /// Resolved snapshot with every key.
  std::string to_json() const;
};

/// Parses a JSON object of flat dotted keys on top of the defaults. Unknown
/// keys and type errors raise ConfigError.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

std::string to_string(DropoutPosition p);

}  // namespace gsifn
