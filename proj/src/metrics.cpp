// SPDX-License-Identifier: Apache-2.0
#include "gsifn/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <memory>
#include <vector>

#include <json.hpp>

#include "gsifn/core/error.hpp"

namespace gsifn {

namespace {

double f1_for(std::span<const bool> pred, std::span<const bool> truth, bool cls) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == cls && truth[i] == cls) ++tp;
    if (pred[i] == cls && truth[i] != cls) ++fp;
    if (pred[i] != cls && truth[i] == cls) ++fn;
  }
  if (tp == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2 * p * r / (p + r);
}

double accuracy(std::span<const bool> pred, std::span<const bool> truth) {
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double bucket(double v, double bound) { return std::nearbyint(std::clamp(v, -bound, bound)); }

double class_accuracy(std::span<const double> preds, std::span<const double> labels, double bound) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += bucket(preds[i], bound) == bucket(labels[i], bound);
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

}  // namespace

double weighted_f1(std::span<const bool> pred, std::span<const bool> truth) {
  if (pred.size() != truth.size()) throw ShapeError("weighted_f1: length mismatch");
  if (pred.empty()) return 0.0;
  const auto pos = static_cast<double>(std::count(truth.begin(), truth.end(), true));
  const auto n = static_cast<double>(truth.size());
  return (pos * f1_for(pred, truth, true) + (n - pos) * f1_for(pred, truth, false)) / n;
}

MetricReport msa_metrics(std::span<const double> preds, std::span<const double> labels) {
  if (preds.size() != labels.size()) throw ShapeError("msa_metrics: preds and labels differ in length");
  if (preds.size() < 2) throw Error("metrics.too_few", "msa_metrics needs at least 2 samples");
  if (std::fegetround() != FE_TONEAREST) throw Error("metrics.rounding", "rounding mode must be to-nearest");
  MetricReport r;
  r.count = preds.size();

  std::vector<bool> p_nn, t_nn, p_np, t_np;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p_nn.push_back(preds[i] >= 0);
    t_nn.push_back(labels[i] >= 0);
    if (labels[i] != 0) {
      p_np.push_back(preds[i] > 0);
      t_np.push_back(labels[i] > 0);
    }
    abs_sum += std::abs(preds[i] - labels[i]);
  }
  // std::vector<bool> has no contiguous storage; copy into plain arrays.
  auto as_array = [](const std::vector<bool>& v) {
    std::unique_ptr<bool[]> a(new bool[v.size()]);
    std::copy(v.begin(), v.end(), a.get());
    return a;
  };
  const auto pn = as_array(p_nn), tn = as_array(t_nn), pp = as_array(p_np), tp = as_array(t_np);
  r.acc2_nn = accuracy({pn.get(), p_nn.size()}, {tn.get(), t_nn.size()});
  r.f1_nn = weighted_f1({pn.get(), p_nn.size()}, {tn.get(), t_nn.size()});
  r.np_count = p_np.size();
  r.acc2_np = accuracy({pp.get(), p_np.size()}, {tp.get(), t_np.size()});
  r.f1_np = weighted_f1({pp.get(), p_np.size()}, {tp.get(), t_np.size()});
  r.acc3 = class_accuracy(preds, labels, 1.0);
  r.acc5 = class_accuracy(preds, labels, 2.0);
  r.acc7 = class_accuracy(preds, labels, 3.0);
  r.mae = abs_sum / static_cast<double>(preds.size());

  const auto n = static_cast<double>(preds.size());
  double mp = 0, ml = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mp += preds[i];
    ml += labels[i];
  }
  mp /= n;
  ml /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sxy += (preds[i] - mp) * (labels[i] - ml);
    sxx += (preds[i] - mp) * (preds[i] - mp);
    syy += (labels[i] - ml) * (labels[i] - ml);
  }
  if (sxx > 0 && syy > 0) r.corr = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j{{"acc2_nn", acc2_nn}, {"acc2_np", acc2_np}, {"f1_nn", f1_nn},   {"f1_np", f1_np},
                           {"acc3", acc3},       {"acc5", acc5},       {"acc7", acc7},     {"mae", mae},
                           {"corr", nullptr},    {"count", count},     {"np_count", np_count}};
  if (corr) j["corr"] = *corr;
  return j.dump(2);
}

}  // namespace gsifn
