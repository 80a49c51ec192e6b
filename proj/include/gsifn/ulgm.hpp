// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gsifn/core/tensor.hpp"

namespace gsifn {

/// Representation streams tracked by label generation: fused m plus t, v, a.
enum class Stream : std::size_t { m = 0, t = 1, v = 2, a = 3 };
inline constexpr std::array<Stream, 4> kStreams{Stream::m, Stream::t, Stream::v, Stream::a};
inline constexpr std::array<Stream, 3> kUnimodalStreams{Stream::t, Stream::v, Stream::a};
char stream_tag(Stream s);

struct UlgmConfig {
  bool enabled = true;
  double epsilon = 1e-8;
  /// Epochs during which unimodal losses are off and labels are not generated.
  std::size_t warmup_epochs = 2;
  /// Offset scale R; defaults to half the label range.
  double offset_scale = 3.0;
  double label_min = -3.0;
  double label_max = 3.0;
};

/// Running-mean positive/negative centers per stream.
class Centers {
 public:
  struct Pole {
    std::vector<double> mean;
    std::uint64_t count = 0;
    friend bool operator==(const Pole&, const Pole&) = default;
  };

  /// Folds one sample in. y_m > 0 updates the positive center, y_m < 0 the
  /// negative one, y_m == 0 neither.
  void update(Stream s, std::span<const float> h, double y_m);
  /// Batch form: rows of `h` (B x w) against labels.
  void update(Stream s, const Tensor<float>& h, std::span<const float> y_m);

  bool warm(Stream s) const;
  const Pole& positive(Stream s) const { return pos_[static_cast<std::size_t>(s)]; }
  const Pole& negative(Stream s) const { return neg_[static_cast<std::size_t>(s)]; }

  std::string to_json() const;

  friend bool operator==(const Centers&, const Centers&) = default;

 private:
  std::array<Pole, 4> pos_;
  std::array<Pole, 4> neg_;
};

/// alpha = (d_n - d_p) / (d_n + d_p + eps) with squared Euclidean distances.
/// Throws "ulgm.centers_cold" when either center is missing.
double relative_distance(std::span<const float> h, const Centers& c, Stream s, double eps = 1e-8);

/// Generated unimodal labels per sample id.
class LabelStore {
 public:
  struct Entry {
    double y_m = 0.0;
    std::array<double, 3> label{};  // t, v, a
    std::uint64_t iteration = 0;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  /// Registers a sample with y^(0) = y_m for every unimodal stream.
  void init(const std::string& id, double y_m);
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  const Entry& at(const std::string& id) const;
  double label(const std::string& id, Stream s) const;
  std::size_t size() const { return entries_.size(); }

  /// Momentum blend of a fresh target for every unimodal stream, then bumps i:
  /// y^(i) = ((i-1)/(i+1)) y^(i-1) + (2/(i+1)) y*.
  void blend(const std::string& id, const std::array<double, 3>& targets);

  void save(const std::filesystem::path& path) const;
  static LabelStore load(const std::filesystem::path& path);
  std::string to_json() const;

  friend bool operator==(const LabelStore&, const LabelStore&) = default;

 private:
  std::map<std::string, Entry> entries_;
};

/// y* = clamp(y_m + (alpha_u - alpha_m) * R).
double label_target(double alpha_u, double alpha_m, double y_m, const UlgmConfig& cfg);

/// Computes y* for every unimodal stream from the sample's hidden states and
/// blends it into the store. `hidden[s]` is the stream's 1 x w representation.
void generate_labels(const std::string& id, const std::array<std::span<const float>, 4>& hidden,
                     const Centers& centers, LabelStore& store, const UlgmConfig& cfg);

template <class T>
struct WeightedLoss {
  Tensor<T> total;
  std::array<Tensor<T>, 4> parts;  // m, t, v, a
};

/// L = sum_u L_u, L_u = (1/B) sum_i w_u^i |yhat_u^i - y_u^i|, w_m = 1,
/// w_u = tanh(|yhat_u - yhat_m|) treated as a constant. Predictions are B x 1;
/// `unimodal` false forces the unimodal weights to 0.
template <class T>
WeightedLoss<T> weighted_loss(const std::array<Tensor<T>, 4>& pred, const std::array<std::vector<T>, 4>& target,
                              bool unimodal = true);

}  // namespace gsifn
