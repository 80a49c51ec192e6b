// SPDX-License-Identifier: Apache-2.0
#include "gsifn/harness/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "gsifn/core/adam.hpp"

namespace gsifn {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot write " + path.string());
  f << text;
  if (!f) throw Error("io", "write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

nlohmann::ordered_json metrics_json(const MetricReport& r) { return nlohmann::ordered_json::parse(r.to_json()); }

void check_dims(const ModelConfig& m, const std::vector<Sample>& data) {
  for (const auto& s : data) {
    const bool tokens = !s.text.defined();
    if (tokens != (m.vocab > 0)) {
      throw ConfigError(s.id + ": text is " + std::string(tokens ? "tokens" : "features") +
                        " but model.vocab is " + std::to_string(m.vocab));
    }
    if (!tokens && s.text.cols() != m.text_dim) {
      throw ConfigError(s.id + ": text dim " + std::to_string(s.text.cols()) + " != model.text_dim " +
                        std::to_string(m.text_dim));
    }
    for (auto tok : s.tokens)
      if (tok >= m.vocab) throw Error("encoding.token_range", s.id + ": token id outside vocabulary");
    if (s.vision.cols() != m.vision_dim) throw ConfigError(s.id + ": vision dim does not match model.vision_dim");
    if (s.audio.cols() != m.audio_dim) throw ConfigError(s.id + ": audio dim does not match model.audio_dim");
  }
}

std::vector<std::size_t> group_index(const ParamSet<float>& ps) {
  std::vector<std::size_t> g;
  for (const auto& p : ps) g.push_back(static_cast<std::size_t>(p.group));
  return g;
}

SegLengths mean_lengths(const std::vector<const Sample*>& samples) {
  std::array<double, 3> sum{};
  for (const auto* s : samples)
    for (std::size_t u = 0; u < 3; ++u) sum[u] += static_cast<double>(s->lengths.as_array()[u]);
  auto avg = [&](std::size_t u) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(sum[u] / static_cast<double>(samples.size()))));
  };
  return {avg(0), avg(1), avg(2)};
}

void write_diagnostic(const fs::path& run_dir, std::size_t epoch, std::size_t step,
                      const std::vector<const Sample*>& batch, const ParamSet<float>& ps, const std::string& what) {
  nlohmann::ordered_json j;
  j["error"] = what;
  j["epoch"] = epoch;
  j["step"] = step;
  auto& ids = j["batch"] = nlohmann::ordered_json::array();
  for (const auto* s : batch) ids.push_back({{"id", s->id}, {"label", s->label}});
  auto& norms = j["param_norms"] = nlohmann::ordered_json::object();
  for (const auto& p : ps) {
    double n = 0;
    for (float v : p.value.values()) n += static_cast<double>(v) * v;
    norms[p.name] = std::sqrt(n);
  }
  write_text(run_dir / "diagnostic.json", j.dump(2) + "\n");
}

}  // namespace

std::vector<const Sample*> select_split(const std::vector<Sample>& data, Split split) {
  std::vector<const Sample*> out;
  for (const auto& s : data)
    if (split_of(s.id) == split) out.push_back(&s);
  return out;
}

std::string model_signature(const RunConfig& cfg) {
  const auto all = nlohmann::ordered_json::parse(cfg.to_json());
  nlohmann::ordered_json sig = nlohmann::ordered_json::object();
  for (const auto& [k, v] : all.items()) {
    if (k == "model" || k == "structure" || k.rfind("model.", 0) == 0 || k.rfind("mlstm.", 0) == 0) sig[k] = v;
  }
  return sig.dump(2);
}

void save_params(const fs::path& path, const ParamSet<float>& ps) {
  std::vector<unsigned char> out;
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  out.insert(out.end(), {'G', 'P', 'R', '1'});
  put_u32(static_cast<std::uint32_t>(ps.size()));
  for (const auto& p : ps) {
    put_u32(static_cast<std::uint32_t>(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    const auto blob = encode_mft(p.value);
    put_u32(static_cast<std::uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("io", "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

void load_params(const fs::path& path, ParamSet<float>& ps) {
  const auto text = read_text(path);
  const auto* p = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t pos = 0;
  auto need = [&](std::size_t k) {
    if (pos + k > n) throw Error("checkpoint.truncated", path.string() + ": truncated");
  };
  auto get_u32 = [&] {
    need(4);
    const std::uint32_t v = p[pos] | p[pos + 1] << 8 | p[pos + 2] << 16 | static_cast<std::uint32_t>(p[pos + 3]) << 24;
    pos += 4;
    return v;
  };
  need(4);
  if (text.compare(0, 4, "GPR1") != 0) throw Error("checkpoint.bad_magic", path.string() + ": not a parameter file");
  pos = 4;
  const auto count = get_u32();
  if (count != ps.size()) {
    throw Error("checkpoint.config_mismatch", "checkpoint has " + std::to_string(count) + " tensors, model has " +
                                                  std::to_string(ps.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_u32();
    need(len);
    const std::string name(text.data() + pos, len);
    pos += len;
    const auto blob_len = get_u32();
    need(blob_len);
    auto t = decode_mft(std::vector<unsigned char>(p + pos, p + pos + blob_len));
    pos += blob_len;
    auto& param = ps[ps.id_of(name)];
    if (param.value.shape() != t.shape()) {
      throw Error("checkpoint.config_mismatch", name + ": checkpoint shape " + shape_str(t.shape()) +
                                                    " vs model " + shape_str(param.value.shape()));
    }
    param.value = std::move(t);
  }
}

std::vector<double> predict(const Model& model, const ParamSet<float>& ps, const std::vector<const Sample*>& samples,
                            std::size_t batch_size) {
  std::vector<double> preds;
  preds.reserve(samples.size());
  Context<float> ctx(ps, false);
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::vector<const Sample*> chunk(samples.begin() + static_cast<long>(b),
                                           samples.begin() + static_cast<long>(std::min(samples.size(), b + batch_size)));
    for (const auto& in : make_batch(chunk)) preds.push_back(model.forward(ctx, in).pred[0].item());
  }
  return preds;
}

MetricReport evaluate(const Model& model, const ParamSet<float>& ps, const std::vector<const Sample*>& samples,
                      std::size_t batch_size) {
  if (samples.empty()) throw Error("eval.empty", "cannot evaluate an empty dataset");
  const auto preds = predict(model, ps, samples, batch_size);
  std::vector<double> labels;
  for (const auto* s : samples) labels.push_back(s->label);
  return msa_metrics(preds, labels);
}

TrainResult train(const RunConfig& cfg, const fs::path& run_dir) {
  if (cfg.manifest.empty()) throw ConfigError("data.manifest is not set");
  return train(cfg, load_dataset(cfg.manifest), run_dir);
}

TrainResult train(const RunConfig& cfg, const std::vector<Sample>& data, const fs::path& run_dir) {
  check_dims(cfg.model, data);
  const auto train_set = select_split(data, Split::train);
  auto val_set = select_split(data, Split::val);
  const auto test_set = select_split(data, Split::test);
  if (train_set.empty()) throw Error("train.empty", "training split is empty");
  // Tiny datasets may leave the validation split unusable; fall back to train.
  const bool val_from_train = val_set.size() < 2;
  if (val_from_train) val_set = train_set;
  if (val_set.size() < 2) throw Error("train.empty", "need at least 2 samples for validation metrics");

  std::error_code ec;
  fs::create_directories(run_dir / "checkpoint", ec);
  if (ec) throw Error("io", "cannot create " + run_dir.string() + ": " + ec.message());

  const Rng root(cfg.seed);
  ParamSet<float> ps;
  Rng init_rng = root.split(1);
  const Model model = Model::create(ps, cfg.model, init_rng);
  const auto groups = group_index(ps);

  write_text(run_dir / "config.json", cfg.to_json() + "\n");
  write_text(run_dir / "cost.json", cost_report(cfg.model, mean_lengths(train_set)).to_json() + "\n");
  std::ofstream log(run_dir / "log.csv", std::ios::binary);
  if (!log) throw Error("io", "cannot write log.csv");
  log << kEpochCsvHeader << '\n';

  LabelStore labels;
  for (const auto* s : train_set) labels.init(s->id, s->label);
  Centers centers;
  std::vector<AdamState<float>> adam(ps.size());
  std::vector<const Sample*> order = train_set;

  TrainResult result;
  result.run_dir = run_dir;
  double best = std::numeric_limits<double>::infinity();
  const Rng dropout_root = root.split(2);
  const Rng shuffle_root = root.split(3);

  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    Rng shuffle_rng = shuffle_root.split(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const bool unimodal = cfg.ulgm.enabled && epoch > cfg.ulgm.warmup_epochs;
    EpochLog elog;
    elog.epoch = epoch;
    std::size_t seen = 0;

    for (std::size_t b = 0, step = 0; b < order.size(); b += cfg.train.batch_size, ++step) {
      const std::vector<const Sample*> batch(order.begin() + static_cast<long>(b),
                                             order.begin() + static_cast<long>(std::min(order.size(), b + cfg.train.batch_size)));
      const auto inputs = make_batch(batch);
      const std::size_t B = batch.size();

      Tape<float> tape;
      Context<float> ctx(ps, true, dropout_root.split(epoch).split(step));
      ctx.dropout_position = cfg.dropout_position;
      ctx.bind(tape);

      std::array<std::vector<Tensor<float>>, 4> preds, hidden;
      std::array<std::vector<float>, 4> targets;
      WeightedLoss<float> loss;
      try {
        for (std::size_t i = 0; i < B; ++i) {
          auto out = model.forward(ctx, inputs[i]);
          for (std::size_t u = 0; u < 4; ++u) {
            preds[u].push_back(out.pred[u]);
            hidden[u].push_back(out.hidden[u].detach());
            targets[u].push_back(static_cast<float>(u == 0 ? batch[i]->label
                                                           : labels.label(batch[i]->id, kStreams[u])));
          }
        }
        std::array<Tensor<float>, 4> stacked;
        for (std::size_t u = 0; u < 4; ++u) stacked[u] = B == 1 ? preds[u].front() : ops::concat(preds[u], 0);
        loss = weighted_loss(stacked, targets, unimodal);
      } catch (const Error& e) {
        if (e.code() != "numeric" && e.code() != "mlstm.overflow") throw;
        write_diagnostic(run_dir, epoch, step, batch, ps, e.what());
        throw Error("train.nan", "non-finite value at epoch " + std::to_string(epoch) + " step " +
                                     std::to_string(step) + " (" + e.what() + "); see diagnostic.json");
      }
      if (!std::isfinite(loss.total.item())) {
        write_diagnostic(run_dir, epoch, step, batch, ps, "non-finite loss");
        throw Error("train.nan", "non-finite loss; see diagnostic.json");
      }
      for (std::size_t u = 0; u < 4; ++u) elog.loss[u] += loss.parts[u].item() * static_cast<double>(B);
      elog.total += loss.total.item() * static_cast<double>(B);
      seen += B;

      const auto grads = tape.backward(loss.total);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::size_t g = groups[i];
        if (cfg.train.lr[g] == 0.0) continue;
        const auto grad = grads.of(ctx.bound()[i]);
        AdamConfig ac;
        ac.lr = cfg.train.lr[g];
        ac.weight_decay = cfg.train.weight_decay[g];
        auto& values = ps[i].value.mutable_values();
        adam_step<float>(values, grad.values(), adam[i], ac);
      }

      if (cfg.ulgm.enabled) {
        for (std::size_t i = 0; i < B; ++i) {
          for (std::size_t u = 0; u < 4; ++u) centers.update(kStreams[u], hidden[u][i].values(), batch[i]->label);
        }
        if (epoch > cfg.ulgm.warmup_epochs &&
            std::all_of(kStreams.begin(), kStreams.end(), [&](Stream s) { return centers.warm(s); })) {
          for (std::size_t i = 0; i < B; ++i) {
            generate_labels(batch[i]->id,
                            {hidden[0][i].values(), hidden[1][i].values(), hidden[2][i].values(), hidden[3][i].values()},
                            centers, labels, cfg.ulgm);
          }
        }
      }
    }

    for (auto& l : elog.loss) l /= static_cast<double>(seen);
    elog.total /= static_cast<double>(seen);
    elog.val = evaluate(model, ps, val_set, cfg.train.batch_size);
    log << epoch << ',' << fmt(elog.total) << ',' << fmt(elog.loss[0]) << ',' << fmt(elog.loss[1]) << ','
        << fmt(elog.loss[2]) << ',' << fmt(elog.loss[3]) << ',' << fmt(elog.val.mae) << ',' << fmt(elog.val.acc2_nn)
        << ',' << fmt(elog.val.acc2_np) << ',' << fmt(elog.val.f1_nn) << ',' << fmt(elog.val.f1_np) << ','
        << fmt(elog.val.acc7) << ',' << (elog.val.corr ? fmt(*elog.val.corr) : std::string("nan")) << '\n';
    log.flush();

    if (elog.val.mae < best) {
      best = elog.val.mae;
      result.best_epoch = epoch;
      result.best_val = elog.val;
      save_params(run_dir / "checkpoint" / "params.bin", ps);
      write_text(run_dir / "checkpoint" / "labels.json", labels.to_json() + "\n");
      write_text(run_dir / "checkpoint" / "centers.json", centers.to_json() + "\n");
    }
    result.epochs.push_back(elog);
    if (cfg.train.early_stop_mae > 0 && elog.val.mae < cfg.train.early_stop_mae) {
      result.early_stopped = true;
      break;
    }
  }
  write_text(run_dir / "checkpoint" / "model.json", model_signature(cfg) + "\n");

  load_params(run_dir / "checkpoint" / "params.bin", ps);
  nlohmann::ordered_json metrics;
  metrics["best_epoch"] = result.best_epoch;
  metrics["epochs_run"] = result.epochs.size();
  metrics["early_stopped"] = result.early_stopped;
  metrics["val_source"] = val_from_train ? "train" : "val";
  metrics["val"] = metrics_json(result.best_val);
  if (test_set.size() >= 2) {
    result.test = evaluate(model, ps, test_set, cfg.train.batch_size);
    metrics["test"] = metrics_json(result.test);
  } else {
    metrics["test"] = nullptr;
  }
  write_text(run_dir / "metrics.json", metrics.dump(2) + "\n");
  return result;
}

MetricReport evaluate_checkpoint(const RunConfig& cfg, const fs::path& checkpoint, const std::vector<Sample>& data) {
  const auto stored = read_text(checkpoint / "model.json");
  if (nlohmann::json::parse(stored) != nlohmann::json::parse(model_signature(cfg))) {
    throw Error("checkpoint.config_mismatch", "model configuration differs from the checkpoint's model.json");
  }
  check_dims(cfg.model, data);
  ParamSet<float> ps;
  Rng init_rng = Rng(cfg.seed).split(1);
  const Model model = Model::create(ps, cfg.model, init_rng);
  load_params(checkpoint / "params.bin", ps);
  std::vector<const Sample*> all;
  for (const auto& s : data) all.push_back(&s);
  return evaluate(model, ps, all, cfg.train.batch_size);
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<StructureId>& structures,
                                const fs::path& out_dir) {
  if (structures.size() < 2) throw ConfigError("ablation needs at least two structures");
  if (cfg.model.kind != FusionKind::gsifn) throw ConfigError("structure ablation applies to the gsifn model");
  if (cfg.manifest.empty()) throw ConfigError("data.manifest is not set");
  const auto data = load_dataset(cfg.manifest);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error("io", "cannot create " + out_dir.string());
  std::ofstream csv(out_dir / "ablation.csv", std::ios::binary);
  if (!csv) throw Error("io", "cannot write ablation.csv");
  csv << "structure,best_epoch,val_mae,val_acc2_nn,val_acc2_np,val_f1_np,val_acc7,val_corr,test_mae,params,flops\n";
  std::vector<AblationRow> rows;
  for (auto s : structures) {
    auto c = cfg;
    c.model.structure = s;
    AblationRow row{s, train(c, data, out_dir / to_string(s)), {}};
    const auto train_set = select_split(data, Split::train);
    row.cost = cost_report(c.model, mean_lengths(train_set));
    const auto& v = row.result.best_val;
    csv << to_string(s) << ',' << row.result.best_epoch << ',' << fmt(v.mae) << ',' << fmt(v.acc2_nn) << ','
        << fmt(v.acc2_np) << ',' << fmt(v.f1_np) << ',' << fmt(v.acc7) << ','
        << (v.corr ? fmt(*v.corr) : std::string("nan")) << ','
        << (row.result.test.count ? fmt(row.result.test.mae) : std::string("nan")) << ','
        << row.cost.params.total << ',' << row.cost.flops.total() << '\n';
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gsifn
