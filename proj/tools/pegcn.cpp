// Command-line surface for reproducible experiments: synthetic data
// generation, noise previews, training, noisy evaluation, gradient checking
// and the two-arm ablation grid. Exit codes: 0 success, 1 config or I/O
// failure, 2 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pegcn/pegcn.hpp"

namespace {

using namespace pegcn;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::size_t> parse_levels(const std::string& csv) {
  std::vector<std::size_t> levels;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    check(!item.empty(), "levels: empty entry in '" + csv + "'");
    levels.push_back(static_cast<std::size_t>(std::stoul(item)));
  }
  check(!levels.empty(), "levels: no entries in '" + csv + "'");
  return levels;
}

// --set key.path=value overrides applied to the config JSON before parsing
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    auto eq = s.find('=');
    check(eq != std::string::npos, "--set expects key.path=value, got '" + s + "'");
    std::string path = s.substr(0, eq);
    std::string value = s.substr(eq + 1);
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      parsed = value;  // plain string
    }
    nlohmann::json* cur = &j;
    std::stringstream ss(path);
    std::string key, next;
    check(static_cast<bool>(std::getline(ss, key, '.')), "--set: empty key path");
    while (std::getline(ss, next, '.')) {
      cur = &(*cur)[key];
      key = next;
    }
    (*cur)[key] = parsed;
  }
}

RunConfig load_config_with_overrides(const std::string& path,
                                     const std::vector<std::string>& sets) {
  nlohmann::json j = load_json_file(path);
  apply_overrides(j, sets);
  return parse_run_config(j);
}

void write_loss_csv(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "cannot open " + path);
  out << "epoch,loss_total,loss_ce,loss_pe,lr\n";
  for (const EpochLog& e : log)
    out << e.epoch << ',' << fmt(e.loss_total) << ',' << fmt(e.loss_ce) << ','
        << fmt(e.loss_pe) << ',' << fmt(e.lr) << '\n';
  check_runtime(out.good(), "write failed for " + path);
}

void write_metrics(const std::vector<MetricsRecord>& records,
                   const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  check_runtime(out.good(), "cannot open " + csv_path);
  out << "noise_level,top1_mean,top1_std,top5_mean,top5_std,repeats,seed\n";
  for (const MetricsRecord& r : records)
    out << r.noise_level << ',' << fmt(r.top1_mean) << ',' << fmt(r.top1_std)
        << ',' << fmt(r.top5_mean) << ',' << fmt(r.top5_std) << ',' << r.repeats
        << ',' << r.seed << '\n';
  check_runtime(out.good(), "write failed for " + csv_path);

  // JSON twin next to the CSV
  std::filesystem::path twin(csv_path);
  twin.replace_extension(".json");
  nlohmann::json j = nlohmann::json::array();
  for (const MetricsRecord& r : records)
    j.push_back({{"noise_level", r.noise_level},
                 {"top1_mean", r.top1_mean},
                 {"top1_std", r.top1_std},
                 {"top5_mean", r.top5_mean},
                 {"top5_std", r.top5_std},
                 {"repeats", r.repeats},
                 {"seed", r.seed}});
  std::ofstream jout(twin, std::ios::binary);
  check_runtime(jout.good(), "cannot open " + twin.string());
  jout << j.dump(2) << '\n';
}

struct GradCheckBatch {
  Tensor clean, noisy;
  std::vector<int> labels;
};

GradCheckBatch make_grad_check_batch(const RunConfig& cfg) {
  SyntheticSpec spec;
  spec.classes = cfg.model.classes;
  spec.per_class = (cfg.grad_check.batch + cfg.model.classes - 1) / cfg.model.classes;
  spec.frames = cfg.grad_check.frames;
  spec.topology = cfg.model.topology;
  spec.seed = derive_seed(cfg.train.seed, "grad-check");
  auto clips = synth_generate(spec);
  std::vector<std::size_t> idx;
  // round-robin over classes so the batch stays label-diverse
  for (std::size_t i = 0; i < cfg.grad_check.batch; ++i)
    idx.push_back((i % spec.classes) * spec.per_class + i / spec.classes);
  GradCheckBatch batch;
  batch.clean = batch_clips(clips, idx);
  std::vector<SkeletonClip> noised;
  for (std::size_t i : idx) {
    NoiseSpec nspec{cfg.grad_check.noise_level,
                    noise_seed_for_clip(spec.seed, "noise", 0, clips[i].clip_id)};
    noised.push_back(inject_noise(clips[i], nspec));
    batch.labels.push_back(clips[i].label);
  }
  std::vector<std::size_t> all(noised.size());
  std::iota(all.begin(), all.end(), 0);
  batch.noisy = batch_clips(noised, all);
  return batch;
}

double run_grad_check(const RunConfig& cfg, PeGCNModel& model) {
  GradCheckBatch batch = make_grad_check_batch(cfg);
  auto fn = [&](Graph& g, const ParamVars& p) -> Var {
    ModelForward mf{g, model, p, ForwardOptions{/*training=*/true, false}};
    TrainForwardOut fwd =
        forward_train(mf, g.constant(batch.clean), g.constant(batch.noisy));
    Var ce = cross_entropy(g, fwd.logits, batch.labels);
    if (!cfg.train.loss.pe_enabled) return ce;
    Var pe = predictive_encoding_loss(g, fwd.pooled_clean, fwd.context,
                                      p.at("pe.w"), cfg.train.loss.temperature);
    return total_loss(g, ce, pe, cfg.train.loss);
  };
  return finite_diff_check(fn, model.params, cfg.grad_check.eps);
}

int cmd_synth_gen(const std::string& spec_path, const std::string& out_path) {
  SyntheticSpec spec = synth_spec_from_json(load_json_file(spec_path));
  save_clips(synth_generate(spec), out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_noise_preview(const std::string& in_path, std::size_t level,
                      std::uint64_t seed, const std::string& out_path) {
  auto clips = load_clips(in_path);
  std::vector<SkeletonClip> noised;
  noised.reserve(clips.size());
  for (const SkeletonClip& clip : clips)
    noised.push_back(inject_noise(
        clip, NoiseSpec{level, noise_seed_for_clip(seed, "preview", 0, clip.clip_id)}));
  save_clips(noised, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& sets) {
  RunConfig cfg = load_config_with_overrides(config_path, sets);
  check(!cfg.data.train_path.empty(), "config: data.train_path is required");
  auto data = load_clips(cfg.data.train_path);
  PeGCNModel model = PeGCNModel::create(cfg.model, cfg.train.seed);
  auto log = train(model, data, cfg.train);
  std::filesystem::create_directories(out_dir);
  save_checkpoint(model, out_dir + "/checkpoint.pegc");
  write_loss_csv(log, out_dir + "/loss.csv");
  std::cout << "wrote " << out_dir << "/checkpoint.pegc and loss.csv ("
            << log.size() << " epochs, final loss " << fmt(log.back().loss_total)
            << ")\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& levels_csv, std::size_t repeats,
             std::uint64_t seed, const std::string& out_path,
             std::size_t batch_size) {
  PeGCNModel model = load_checkpoint(checkpoint_path);
  auto clips = load_clips(data_path);
  std::vector<MetricsRecord> records;
  for (std::size_t level : parse_levels(levels_csv)) {
    MetricsRecord rec = evaluate(model, clips, level, repeats, seed, batch_size);
    std::cout << "level " << level << ": top1 " << fmt(rec.top1_mean) << " (+-"
              << fmt(rec.top1_std) << ") top5 " << fmt(rec.top5_mean) << " (+-"
              << fmt(rec.top5_std) << ")\n";
    records.push_back(rec);
  }
  write_metrics(records, out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_grad_check(const std::string& config_path,
                   const std::vector<std::string>& sets) {
  RunConfig cfg = load_config_with_overrides(config_path, sets);
  PeGCNModel model = PeGCNModel::create(cfg.model, cfg.train.seed);
  double err = run_grad_check(cfg, model);
  std::cout << "grad-check: max_relative_error=" << fmt(err) << " tolerance="
            << fmt(cfg.grad_check.tolerance) << "\n";
  if (!(err < cfg.grad_check.tolerance)) {
    std::cerr << "pegcn-error kind=numeric msg=\"grad-check failed: "
              << fmt(err) << " >= " << fmt(cfg.grad_check.tolerance) << "\"\n";
    return 2;
  }
  return 0;
}

int cmd_ablation(const std::string& config_path, const std::string& out_path,
                 const std::string& out_dir,
                 const std::vector<std::string>& sets) {
  RunConfig cfg = load_config_with_overrides(config_path, sets);
  check(!cfg.data.train_path.empty(), "config: data.train_path is required");
  check(!cfg.data.eval_path.empty(), "config: data.eval_path is required");
  auto train_clips = load_clips(cfg.data.train_path);
  auto eval_clips = load_clips(cfg.data.eval_path);

  std::ofstream out(out_path, std::ios::binary);
  check_runtime(out.good(), "cannot open " + out_path);
  out << "arm,train_noise_level,test_noise_level,top1_mean,top1_std,"
         "top5_mean,top5_std,repeats,seed\n";

  const char* arms[] = {"ce", "total"};
  for (std::size_t arm = 0; arm < 2; ++arm) {
    for (std::size_t train_level : cfg.ablation.train_levels) {
      TrainConfig tc = cfg.train;
      tc.train_noise_level = train_level;
      tc.loss.pe_enabled = arm == 1;
      PeGCNModel model = PeGCNModel::create(cfg.model, cfg.train.seed);
      auto log = train(model, train_clips, tc);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::string stem = out_dir + "/" + arms[arm] + "_train" +
                           std::to_string(train_level);
        save_checkpoint(model, stem + ".pegc");
        write_loss_csv(log, stem + "_loss.csv");
      }
      for (std::size_t test_level : cfg.ablation.test_levels) {
        std::uint64_t seed =
            derive_seed(cfg.train.seed, "ablation-eval", {arm, train_level, test_level});
        MetricsRecord rec =
            evaluate(model, eval_clips, test_level, cfg.eval.repeats, seed);
        out << arms[arm] << ',' << train_level << ',' << test_level << ','
            << fmt(rec.top1_mean) << ',' << fmt(rec.top1_std) << ','
            << fmt(rec.top5_mean) << ',' << fmt(rec.top5_std) << ','
            << rec.repeats << ',' << rec.seed << '\n';
        std::cout << arms[arm] << " train@" << train_level << " test@"
                  << test_level << ": top1 " << fmt(rec.top1_mean) << "\n";
      }
    }
  }
  check_runtime(out.good(), "write failed for " + out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PeGCN: noise-robust skeleton action recognition, desk scale"};
  app.require_subcommand(1);

  std::string spec_path, out_path, in_path, config_path, out_dir, checkpoint_path,
      data_path, levels_csv = "0,1,3,5,10";
  std::size_t level = 0, repeats = 10, batch_size = 32;
  std::uint64_t seed = 1;
  std::vector<std::string> sets;

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
  synth->add_option("--out", out_path, "output JSONL path")->required();

  auto* preview = app.add_subcommand("noise-preview", "write a noised copy of a dataset");
  preview->add_option("--in", in_path, "input JSONL")->required();
  preview->add_option("--level", level, "noise level (joints)")->required();
  preview->add_option("--seed", seed, "noise seed");
  preview->add_option("--out", out_path, "output JSONL path")->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "run config JSON")->required();
  train->add_option("--out-dir", out_dir, "output directory")->required();
  train->add_option("--set", sets, "override config keys, e.g. --set train.epochs=10");

  auto* eval = app.add_subcommand("eval", "noisy evaluation protocol");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--data", data_path, "evaluation JSONL")->required();
  eval->add_option("--levels", levels_csv, "comma-separated noise levels");
  eval->add_option("--repeats", repeats, "repeats per level");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--batch-size", batch_size, "evaluation batch size");
  eval->add_option("--out", out_path, "output CSV path")->required();

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the total loss");
  gc->add_option("--config", config_path, "run config JSON")->required();
  gc->add_option("--set", sets, "override config keys");

  auto* abl = app.add_subcommand("ablation", "train and evaluate the ce/total arms");
  abl->add_option("--config", config_path, "run config JSON")->required();
  abl->add_option("--out", out_path, "output CSV path")->required();
  abl->add_option("--out-dir", out_dir, "optional directory for per-arm artifacts");
  abl->add_option("--set", sets, "override config keys");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth_gen(spec_path, out_path);
    if (preview->parsed()) return cmd_noise_preview(in_path, level, seed, out_path);
    if (train->parsed()) return cmd_train(config_path, out_dir, sets);
    if (eval->parsed())
      return cmd_eval(checkpoint_path, data_path, levels_csv, repeats, seed,
                      out_path, batch_size);
    if (gc->parsed()) return cmd_grad_check(config_path, sets);
    if (abl->parsed()) return cmd_ablation(config_path, out_path, out_dir, sets);
  } catch (const pegcn::NumericError& e) {
    std::cerr << "pegcn-error kind=numeric msg=\"" << e.what() << "\"\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pegcn-error kind=config msg=\"" << e.what() << "\"\n";
    return 1;
  }
  return 1;
}
