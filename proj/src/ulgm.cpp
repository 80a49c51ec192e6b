// SPDX-License-Identifier: Apache-2.0
#include "gsifn/ulgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gsifn/core/ops.hpp"

namespace gsifn {

char stream_tag(Stream s) { return "mtva"[static_cast<std::size_t>(s)]; }

namespace {

void fold(Centers::Pole& p, std::span<const float> h) {
  if (p.mean.empty()) p.mean.assign(h.size(), 0.0);
  if (p.mean.size() != h.size()) throw ShapeError("centers: hidden width changed");
  ++p.count;
  const double w = 1.0 / static_cast<double>(p.count);
  for (std::size_t k = 0; k < h.size(); ++k) p.mean[k] += (h[k] - p.mean[k]) * w;
}

double sq_dist(std::span<const float> h, const std::vector<double>& c) {
  if (c.size() != h.size()) throw ShapeError("relative_distance: width mismatch");
  double d = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) d += (h[k] - c[k]) * (h[k] - c[k]);
  return d;
}

}  // namespace

void Centers::update(Stream s, std::span<const float> h, double y_m) {
  const auto i = static_cast<std::size_t>(s);
  if (y_m > 0) {
    fold(pos_[i], h);
  } else if (y_m < 0) {
    fold(neg_[i], h);
  }
}

void Centers::update(Stream s, const Tensor<float>& h, std::span<const float> y_m) {
  if (h.rows() != y_m.size()) throw ShapeError("centers: batch of " + std::to_string(h.rows()) + " rows vs " +
                                               std::to_string(y_m.size()) + " labels");
  for (std::size_t r = 0; r < h.rows(); ++r) update(s, h.values().subspan(r * h.cols(), h.cols()), y_m[r]);
}

bool Centers::warm(Stream s) const {
  const auto i = static_cast<std::size_t>(s);
  return pos_[i].count > 0 && neg_[i].count > 0;
}

std::string Centers::to_json() const {
  nlohmann::ordered_json j;
  for (auto s : kStreams) {
    const auto i = static_cast<std::size_t>(s);
    j[std::string(1, stream_tag(s))] = {{"pos", {{"count", pos_[i].count}, {"mean", pos_[i].mean}}},
                                        {"neg", {{"count", neg_[i].count}, {"mean", neg_[i].mean}}}};
  }
  return j.dump(1);
}

double relative_distance(std::span<const float> h, const Centers& c, Stream s, double eps) {
  if (!c.warm(s)) throw Error("ulgm.centers_cold", std::string("centers cold for stream ") + stream_tag(s));
  const double dp = sq_dist(h, c.positive(s).mean);
  const double dn = sq_dist(h, c.negative(s).mean);
  return (dn - dp) / (dn + dp + eps);
}

void LabelStore::init(const std::string& id, double y_m) {
  Entry e;
  e.y_m = y_m;
  e.label = {y_m, y_m, y_m};
  entries_[id] = e;
}

const LabelStore::Entry& LabelStore::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error("ulgm.unknown_sample", "unknown sample id " + id);
  return it->second;
}

double LabelStore::label(const std::string& id, Stream s) const {
  if (s == Stream::m) return at(id).y_m;
  return at(id).label[static_cast<std::size_t>(s) - 1];
}

void LabelStore::blend(const std::string& id, const std::array<double, 3>& targets) {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw Error("ulgm.unknown_sample", "unknown sample id " + id);
  auto& e = it->second;
  const double i = static_cast<double>(++e.iteration);
  for (std::size_t u = 0; u < 3; ++u) e.label[u] = (i - 1.0) / (i + 1.0) * e.label[u] + 2.0 / (i + 1.0) * targets[u];
}

std::string LabelStore::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [id, e] : entries_) {
    j[id] = {{"y_m", e.y_m}, {"t", e.label[0]}, {"v", e.label[1]}, {"a", e.label[2]}, {"i", e.iteration}};
  }
  return j.dump(1);
}

void LabelStore::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw Error("io", "cannot write " + path.string());
  f << to_json() << '\n';
}

LabelStore LabelStore::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("io", "cannot open " + path.string());
  LabelStore s;
  try {
    const auto j = nlohmann::json::parse(f);
    for (const auto& [id, v] : j.items()) {
      Entry e;
      e.y_m = v.at("y_m").get<double>();
      e.label = {v.at("t").get<double>(), v.at("v").get<double>(), v.at("a").get<double>()};
      e.iteration = v.at("i").get<std::uint64_t>();
      s.entries_[id] = e;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error("ulgm.store", path.string() + ": " + ex.what());
  }
  return s;
}

double label_target(double alpha_u, double alpha_m, double y_m, const UlgmConfig& cfg) {
  return std::clamp(y_m + (alpha_u - alpha_m) * cfg.offset_scale, cfg.label_min, cfg.label_max);
}

void generate_labels(const std::string& id, const std::array<std::span<const float>, 4>& hidden,
                     const Centers& centers, LabelStore& store, const UlgmConfig& cfg) {
  const double y_m = store.at(id).y_m;
  const double alpha_m = relative_distance(hidden[0], centers, Stream::m, cfg.epsilon);
  std::array<double, 3> targets{};
  for (std::size_t u = 0; u < 3; ++u) {
    const double alpha_u = relative_distance(hidden[u + 1], centers, kUnimodalStreams[u], cfg.epsilon);
    targets[u] = label_target(alpha_u, alpha_m, y_m, cfg);
  }
  store.blend(id, targets);
}

template <class T>
WeightedLoss<T> weighted_loss(const std::array<Tensor<T>, 4>& pred, const std::array<std::vector<T>, 4>& target,
                              bool unimodal) {
  const std::size_t batch = pred[0].defined() ? pred[0].rows() : 0;
  if (batch == 0) throw Error("loss.empty_batch", "weighted loss over an empty batch");
  for (std::size_t u = 0; u < 4; ++u) {
    if (pred[u].rows() != batch || pred[u].cols() != 1 || target[u].size() != batch) {
      throw ShapeError("weighted_loss: stream " + std::string(1, stream_tag(kStreams[u])) + " is not batch aligned");
    }
  }
  const T inv_b = T(1) / static_cast<T>(batch);
  WeightedLoss<T> out;
  const auto err = [&](std::size_t u) {
    return ops::abs(ops::sub(pred[u], Tensor<T>({batch, 1}, target[u])));
  };
  out.parts[0] = ops::scale(ops::sum(err(0)), inv_b);
  out.total = out.parts[0];
  for (std::size_t u = 1; u < 4; ++u) {
    std::vector<T> w(batch, T(0));
    if (unimodal) {
      for (std::size_t i = 0; i < batch; ++i) w[i] = std::tanh(std::abs(pred[u][i] - pred[0][i]));
    }
    out.parts[u] = ops::scale(ops::sum(ops::mul(Tensor<T>({batch, 1}, std::move(w)), err(u))), inv_b);
    out.total = ops::add(out.total, out.parts[u]);
  }
  return out;
}

template WeightedLoss<float> weighted_loss(const std::array<Tensor<float>, 4>&,
                                           const std::array<std::vector<float>, 4>&, bool);
template WeightedLoss<double> weighted_loss(const std::array<Tensor<double>, 4>&,
                                            const std::array<std::vector<double>, 4>&, bool);

}  // namespace gsifn
