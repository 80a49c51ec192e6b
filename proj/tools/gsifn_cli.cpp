// SPDX-License-Identifier: Apache-2.0
// Command-line front end: synth, train, eval, ablate, count, dump-masks, dump-attn.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsifn/cost.hpp"
#include "gsifn/harness/train.hpp"

namespace fs = std::filesystem;
using namespace gsifn;

namespace {

SegLengths parse_seg(const std::string& s) {
  std::array<std::size_t, 3> v{};
  std::stringstream ss(s);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ',')) {
    if (i == 3) throw Error("cli.seg", "--seg expects three comma-separated lengths");
    try {
      std::size_t used = 0;
      const long n = std::stol(part, &used);
      if (used != part.size() || n < 0) throw std::invalid_argument(part);
      v[i++] = static_cast<std::size_t>(n);
    } catch (const std::logic_error&) {
      throw Error("cli.seg", "bad length '" + part + "' in --seg");
    }
  }
  if (i != 3) throw Error("cli.seg", "--seg expects three comma-separated lengths");
  SegLengths seg{v[0], v[1], v[2]};
  seg.validate();
  return seg;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw Error("io", "cannot open " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig config_with_seed(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto cfg = load_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

void write_json(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw Error("io", "cannot write " + p.string());
  f << text << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsifn: graph-structured interlaced-masked multimodal fusion"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, manifest, seg_str = "20,30,30", structure = "original",
                                                          structures, sample_id, synth_spec;
  std::optional<std::uint64_t> seed;
  std::size_t samples = 0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", synth_spec, "synthetic spec JSON");
  synth->add_option("--seed", seed, "random seed");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--samples", samples, "override the sample count");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_path, "run config JSON")->required();
  train_cmd->add_option("--seed", seed, "override the config seed");
  train_cmd->add_option("--out", out_dir, "run directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--config", config_path, "run config JSON")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--manifest", manifest, "dataset manifest (defaults to data.manifest)");
  eval_cmd->add_option("--seed", seed, "override the config seed");

  auto* ablate_cmd = app.add_subcommand("ablate", "graph-structure ablation");
  ablate_cmd->add_option("--config", config_path, "run config JSON")->required();
  ablate_cmd->add_option("--seed", seed, "override the config seed");
  ablate_cmd->add_option("--out", out_dir, "output directory")->required();
  ablate_cmd->add_option("--structures", structures, "comma-separated structures (default: all)");

  auto* count_cmd = app.add_subcommand("count", "parameter and FLOP report");
  count_cmd->add_option("--config", config_path, "run config JSON")->required();
  count_cmd->add_option("--seg", seg_str, "sequence lengths t,v,a");

  auto* masks_cmd = app.add_subcommand("dump-masks", "write interlaced masks");
  masks_cmd->add_option("--seg", seg_str, "sequence lengths t,v,a")->required();
  masks_cmd->add_option("--structure", structure, "graph structure");
  masks_cmd->add_option("--out", out_dir, "output directory");

  auto* attn_cmd = app.add_subcommand("dump-attn", "export attention maps for one sample");
  attn_cmd->add_option("--config", config_path, "run config JSON")->required();
  attn_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory (default: fresh init)");
  attn_cmd->add_option("--sample", sample_id, "sample id (default: first in manifest)");
  attn_cmd->add_option("--seed", seed, "override the config seed");
  attn_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) {
      auto spec = synth_spec.empty() ? SynthSpec{} : SynthSpec::parse(read_file(synth_spec));
      if (samples) spec.samples = samples;
      const auto path = synth_dataset(spec, seed.value_or(0), out_dir);
      std::cout << path.string() << '\n';
    } else if (train_cmd->parsed()) {
      const auto cfg = config_with_seed(config_path, seed);
      const auto r = train(cfg, out_dir);
      std::cout << read_file(fs::path(out_dir) / "metrics.json");
      (void)r;
    } else if (eval_cmd->parsed()) {
      auto cfg = config_with_seed(config_path, seed);
      const std::string m = manifest.empty() ? cfg.manifest : manifest;
      if (m.empty()) throw ConfigError("no dataset: pass --manifest or set data.manifest");
      const auto data = load_dataset(m);
      std::cout << evaluate_checkpoint(cfg, checkpoint, data).to_json() << '\n';
    } else if (ablate_cmd->parsed()) {
      const auto cfg = config_with_seed(config_path, seed);
      std::vector<StructureId> list(kAllStructures.begin(), kAllStructures.end());
      if (!structures.empty()) {
        list.clear();
        std::stringstream ss(structures);
        std::string s;
        while (std::getline(ss, s, ',')) list.push_back(parse_structure(s));
      }
      ablate(cfg, list, out_dir);
      std::cout << read_file(fs::path(out_dir) / "ablation.csv");
    } else if (count_cmd->parsed()) {
      const auto cfg = load_config(config_path);
      std::cout << cost_report(cfg.model, parse_seg(seg_str)).to_json() << '\n';
    } else if (masks_cmd->parsed()) {
      const auto seg = parse_seg(seg_str);
      const auto s = parse_structure(structure);
      const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
      fs::create_directories(dir);
      const auto fwd = gen_structure_mask(seg, s, RingDirection::forward);
      const auto bwd = gen_structure_mask(seg, s, RingDirection::backward);
      const auto intra = gen_interlaced_mask(seg, MaskMode::intra, RingDirection::forward);
      write_mft(dir / "mask_forward.mft", fwd.tensor<float>());
      write_mft(dir / "mask_backward.mft", bwd.tensor<float>());
      write_mft(dir / "mask_intra.mft", intra.tensor<float>());
      nlohmann::ordered_json j;
      j["seg"] = {{"t", seg.text}, {"v", seg.vision}, {"a", seg.audio}};
      j["structure"] = to_string(s);
      j["masked_value"] = ops::kMaskedLogit;
      j["forward"] = pattern_str(fwd.pattern());
      j["backward"] = pattern_str(bwd.pattern());
      j["intra"] = pattern_str(intra.pattern());
      write_json(dir / "patterns.json", j.dump(2));
      std::cout << j.dump(2) << '\n';
    } else if (attn_cmd->parsed()) {
      const auto cfg = config_with_seed(config_path, seed);
      if (cfg.manifest.empty()) throw ConfigError("data.manifest is not set");
      const auto entries = read_manifest(cfg.manifest);
      if (entries.empty()) throw Error("eval.empty", "manifest is empty");
      const ManifestEntry* entry = &entries.front();
      if (!sample_id.empty()) {
        entry = nullptr;
        for (const auto& e : entries)
          if (e.id == sample_id) entry = &e;
        if (!entry) throw Error("ulgm.unknown_sample", "no sample " + sample_id);
      }
      const auto sample = load_sample(*entry, fs::path(cfg.manifest).parent_path());
      ParamSet<float> ps;
      Rng init_rng = Rng(cfg.seed).split(1);
      const auto model = Model::create(ps, cfg.model, init_rng);
      if (!checkpoint.empty()) load_params(fs::path(checkpoint) / "params.bin", ps);
      Context<float> ctx(ps, false);
      std::vector<nn::AttentionRecord> records;
      const auto batch = make_batch({&sample});
      model.forward(ctx, batch.front(), &records);
      export_attention(records, sample.lengths, out_dir);
      std::cout << records.size() << " attention maps written to " << out_dir << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
