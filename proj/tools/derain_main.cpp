#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "derain/eval.hpp"
#include "derain/png_io.hpp"
#include "derain/verify.hpp"

namespace fs = std::filesystem;
using namespace derain;

namespace {

struct ConfigOpts {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_config_opts(CLI::App* cmd, ConfigOpts& o) {
  cmd->add_option("--config", o.config_file, "config file (key = value lines)");
  cmd->add_option("--set", o.sets, "override a config key, e.g. --set crop=64")
      ->type_name("KEY=VALUE");
}

void apply_config_opts(RunConfig& c, const ConfigOpts& o) {
  if (!o.config_file.empty()) {
    std::ifstream is(o.config_file);
    require(is.good(), "cannot read config file: ", o.config_file);
    std::ostringstream ss;
    ss << is.rdbuf();
    config_apply_text(c, ss.str());
  }
  for (const std::string& kv : o.sets) {
    const size_t eq = kv.find('=');
    require(eq != std::string::npos && eq > 0, "bad --set '", kv, "', expected key=value");
    config_apply_kv(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

SynthConfig synth_config_of(const RunConfig& c) {
  SynthConfig sc;
  sc.levels = c.levels;
  sc.intensity_min = c.intensity_min;
  sc.intensity_max = c.intensity_max;
  sc.angle_min = c.angle_min;
  sc.angle_max = c.angle_max;
  sc.streak_length = c.streak_length;
  sc.streak_brightness = c.streak_brightness;
  sc.drop_density = c.drop_density;
  sc.drop_radius_min = c.drop_radius_min;
  sc.drop_radius_max = c.drop_radius_max;
  sc.drop_refraction = c.drop_refraction;
  sc.test_fraction = c.test_fraction;
  sc.seed = c.seed;
  return sc;
}

std::vector<std::string> png_files(const std::string& dir) {
  require(fs::is_directory(dir), "not a directory: ", dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

Tensor<float> to_rgb(const Tensor<float>& img) {
  if (img.c() == 3) return img;
  Tensor<float> out(Shape::image(img.h(), img.w(), 3));
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
  return out;
}

// A chained variant configured with a single stage cannot chain; treat the
// stage count as 2 and say so.
void fix_stage_count(const ParsedVariant& pv, ModelConfig& mc) {
  if (pv.stages > 0) mc.stages_T = pv.stages;
  if (variant_is_chained(pv.v) && mc.stages_T < 2) {
    std::printf("note: %s needs at least 2 stages, raising stages_T to 2\n",
                variant_name(pv.v));
    mc.stages_T = 2;
  }
}

// ------------------------------------------------------------------ synth

int cmd_synth(const ConfigOpts& copts, const std::string& out_dir,
              const std::string& clean_dir, int make_clean, int size, uint64_t seed,
              bool seed_given) {
  RunConfig c;
  apply_config_opts(c, copts);
  if (seed_given) c.seed = seed;
  SynthConfig sc = synth_config_of(c);

  std::vector<Tensor<float>> cleans;
  std::vector<std::string> names;
  if (make_clean > 0) {
    require(size >= 16, "--size must be at least 16, got ", size);
    cleans = make_clean_set(make_clean, size, size, c.seed);
    for (int i = 0; i < make_clean; ++i) names.push_back(clean_image_name(i));
  } else {
    require(!clean_dir.empty(), "need --clean DIR or --make-clean N");
    for (const std::string& f : png_files(clean_dir)) {
      cleans.push_back(to_rgb(read_png(f)));
      names.push_back(fs::path(f).stem().string());
    }
    require(!cleans.empty(), "no .png files in ", clean_dir);
  }

  Corpus corpus = synth_corpus(cleans, names, sc);
  write_dataset(out_dir, corpus.pairs, corpus.infos);
  config_save(c, (fs::path(out_dir) / "config.txt").string());

  int n_train = 0, n_test = 0;
  std::map<double, int> by_intensity;
  for (const auto& info : corpus.infos) {
    (info.split == "test" ? n_test : n_train)++;
    by_intensity[info.sp.intensity]++;
  }
  std::printf("wrote %zu pairs to %s (%d train, %d test)\n", corpus.pairs.size(),
              out_dir.c_str(), n_train, n_test);
  for (const auto& [lvl, n] : by_intensity) std::printf("  intensity %.3f: %d pairs\n", lvl, n);
  return 0;
}

// ------------------------------------------------------------------ train

std::vector<SamplePair> make_overfit_pairs(uint64_t seed) {
  SynthConfig sc;
  sc.levels = 1;
  sc.intensity_min = sc.intensity_max = 0.3;
  sc.angle_min = -20;
  sc.angle_max = 20;
  sc.streak_length = 9;
  sc.streak_brightness = 0.6;
  sc.drop_density = 50;
  sc.drop_radius_min = 3;
  sc.drop_radius_max = 5;
  sc.drop_refraction = 0.5;
  sc.test_fraction = 0;
  sc.seed = mix_seed(seed, 0x0f18);
  std::vector<std::string> names;
  for (int i = 0; i < 4; ++i) names.push_back(concat("overfit", i));
  return synth_corpus(make_clean_set(4, 64, 64, mix_seed(seed, 0x0f17)), names, sc).pairs;
}

void apply_preset(RunConfig& c, const std::string& preset) {
  if (preset == "overfit4") {
    c.variant = "dam_dual";
    c.model.feat_ch = 16;
    c.model.dec_ch = 32;
    c.model.recurrence_R = 1;
    c.batch_size = 2;
    c.crop = 64;  // train on whole cards so the full-image score is what descends
    c.optimizer = "adam";
    c.lr_start = 1.5e-3;
    c.lr_end = 1e-5;
    c.lr_decay = "step:1400,1800";
    c.max_iters = 2000;
    c.seed = 21;
    c.log_every = 25;
    c.eval_every = 250;
    c.checkpoint_every = 0;
    return;
  }
  fail("unknown preset '", preset, "' (available: overfit4)");
}

template <typename T>
int run_train(const RunConfig& c, const std::vector<SamplePair>& pairs,
              const std::string& out_dir, const std::string& resume) {
  TrainResult res = train_loop<T>(c, pairs, out_dir, resume);
  std::printf("trained %s for %lld iterations: loss %.6g, train psnr %.2f dB\n",
              c.variant.c_str(), (long long)res.iters, res.final_loss, res.final_train_psnr);
  std::printf("checkpoint: %s\nlog: %s\n", res.checkpoint_path.c_str(), res.log_path.c_str());
  return 0;
}

int cmd_train(const ConfigOpts& copts, const std::string& out_dir, const std::string& data_dir,
              const std::string& preset, const std::string& resume,
              const std::string& variant_flag, uint64_t seed, bool seed_given,
              long long iters_flag) {
  RunConfig c;
  if (!preset.empty()) apply_preset(c, preset);
  apply_config_opts(c, copts);
  if (!variant_flag.empty()) c.variant = variant_flag;
  if (seed_given) c.seed = seed;
  if (iters_flag > 0) c.max_iters = iters_flag;

  const ParsedVariant pv = parse_variant(c.variant);  // validates early
  fix_stage_count(pv, c.model);
  c.variant = pv.stages > 0 ? variant_name(pv.v) : c.variant;

  std::vector<SamplePair> pairs;
  if (preset == "overfit4") {
    pairs = make_overfit_pairs(c.seed);
  } else {
    require(!data_dir.empty(), "need --data DIR (or --preset overfit4)");
    Dataset ds = read_dataset(data_dir);
    for (size_t i = 0; i < ds.pairs.size(); ++i)
      if (ds.infos[i].split == "train") pairs.push_back(std::move(ds.pairs[i]));
    require(!pairs.empty(), "dataset ", data_dir, " has no training split");
  }

  fs::create_directories(out_dir);
  config_save(c, (fs::path(out_dir) / "config.txt").string());
  return c.fp64 ? run_train<double>(c, pairs, out_dir, resume)
                : run_train<float>(c, pairs, out_dir, resume);
}

// ------------------------------------------------------------------ derain

template <typename T>
int run_derain(const CheckpointInfo& info, const std::string& ckpt, const std::string& in_dir,
               const std::string& out_dir, bool export_attention, bool export_stages) {
  const ParsedVariant pv = parse_variant(info.variant);
  Net<T> net = Net<T>::build(pv.v, info.cfg);
  int64_t iter = 0;
  load_checkpoint<T>(ckpt, net, iter, nullptr, nullptr, nullptr);

  fs::create_directories(out_dir);
  int n_ok = 0, n_failed = 0;
  for (const std::string& f : png_files(in_dir)) {
    const std::string stem = fs::path(f).stem().string();
    try {
      const Tensor<T> img = tensor_cast<T>(to_rgb(read_png(f)));
      auto save = [&](const std::string& suffix, const Tensor<T>& t) {
        write_png((fs::path(out_dir) / (stem + suffix)).string(),
                  clamp01(tensor_cast<float>(t)));
      };
      if (!export_attention && !export_stages) {
        save(".png", net.infer(img));
      } else {
        InferTrace<T> tr = net.trace(img);
        save(".png", tr.i_out);
        const StageTensors<T>& last = tr.stages.back();
        if (export_attention) {
          const bool two_branch = last.branches.size() == 2;
          for (size_t b = 0; b < last.branches.size(); ++b) {
            const std::string tag =
                two_branch ? (b == 0 ? "_streak" : "_drop") : std::string();
            if (last.branches[b].s_plus) save(concat("_att", tag, "_heavy.png"),
                                              *last.branches[b].s_plus);
            if (last.branches[b].s_minus) save(concat("_att", tag, "_light.png"),
                                               *last.branches[b].s_minus);
          }
        }
        if (export_stages) {
          for (size_t s = 0; s < tr.stages.size(); ++s) {
            save(concat("_stage", s + 1, ".png"), tr.stages[s].i_out);
            if (tr.stages[s].map_a) save(concat("_diff_a", s + 1, ".png"), *tr.stages[s].map_a);
            if (tr.stages[s].map_b) save(concat("_diff_b", s + 1, ".png"), *tr.stages[s].map_b);
          }
        }
      }
      ++n_ok;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "skipping %s: %s\n", f.c_str(), e.what());
      ++n_failed;
    }
  }
  std::printf("derained %d image(s) into %s (%d failed)\n", n_ok, out_dir.c_str(), n_failed);
  return n_failed == 0 ? 0 : 1;
}

int cmd_derain(const std::string& ckpt, const std::string& in_dir, const std::string& out_dir,
               bool export_attention, bool export_stages) {
  const CheckpointInfo info = peek_checkpoint(ckpt);
  require(!png_files(in_dir).empty(), "no .png files in ", in_dir);
  return info.dtype == 'd'
             ? run_derain<double>(info, ckpt, in_dir, out_dir, export_attention, export_stages)
             : run_derain<float>(info, ckpt, in_dir, out_dir, export_attention, export_stages);
}

// ------------------------------------------------------------------ eval

template <typename T>
int run_eval(const CheckpointInfo& info, const std::string& ckpt,
             std::vector<SamplePair> pairs, const std::string& out_dir) {
  const ParsedVariant pv = parse_variant(info.variant);
  Net<T> net = Net<T>::build(pv.v, info.cfg);
  int64_t iter = 0;
  load_checkpoint<T>(ckpt, net, iter, nullptr, nullptr, nullptr);

  MetricReport rep = evaluate(net, pairs);
  std::printf("%s", report_table(rep).c_str());
  std::printf("variant=%s params=%lld iteration=%lld\n", info.variant.c_str(),
              (long long)net.ps.param_count(), (long long)iter);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream rec((fs::path(out_dir) / "eval_records.txt").string());
    for (const auto& r : rep.records)
      rec << "id=" << r.id << " psnr=" << r.psnr_out << " ssim=" << r.ssim_out
          << " ms=" << r.ms << "\n";
    require(rec.good(), "cannot write records under ", out_dir);
  }
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& out_dir) {
  const CheckpointInfo info = peek_checkpoint(ckpt);
  Dataset ds = read_dataset(data_dir);
  std::vector<SamplePair> pairs;
  for (size_t i = 0; i < ds.pairs.size(); ++i)
    if (split == "all" || ds.infos[i].split == split) pairs.push_back(std::move(ds.pairs[i]));
  require(!pairs.empty(), "dataset ", data_dir, " has no '", split, "' pairs");
  return info.dtype == 'd' ? run_eval<double>(info, ckpt, std::move(pairs), out_dir)
                           : run_eval<float>(info, ckpt, std::move(pairs), out_dir);
}

// ------------------------------------------------------------------ ablate

int cmd_ablate(const ConfigOpts& copts, const std::string& data_dir, const std::string& out_dir,
               const std::string& variants_csv, const std::string& seeds_csv) {
  RunConfig c;
  apply_config_opts(c, copts);
  if (c.max_iters <= 0) c.max_iters = 500;

  auto split_csv = [](const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
      size_t comma = s.find(',', pos);
      if (comma == std::string::npos) comma = s.size();
      if (comma > pos) out.push_back(s.substr(pos, comma - pos));
      pos = comma + 1;
    }
    return out;
  };
  const std::vector<std::string> variants = split_csv(variants_csv);
  require(!variants.empty(), "--variants is empty");
  for (const auto& v : variants) parse_variant(v);
  std::vector<uint64_t> seeds;
  for (const auto& s : split_csv(seeds_csv)) {
    require(s.find_first_not_of("0123456789") == std::string::npos, "bad seed '", s, "'");
    seeds.push_back(std::stoull(s));
  }
  require(!seeds.empty(), "--seeds is empty");

  Dataset ds = read_dataset(data_dir);
  std::vector<SamplePair> train_set, test_set;
  for (size_t i = 0; i < ds.pairs.size(); ++i)
    (ds.infos[i].split == "test" ? test_set : train_set).push_back(std::move(ds.pairs[i]));
  require(!train_set.empty(), "dataset ", data_dir, " has no training split");
  require(!test_set.empty(), "dataset ", data_dir, " has no test split");

  fs::create_directories(out_dir);
  config_save(c, (fs::path(out_dir) / "config.txt").string());
  AblationReport rep =
      c.fp64 ? ablation_run<double>(c, variants, seeds, train_set, test_set, out_dir)
             : ablation_run<float>(c, variants, seeds, train_set, test_set, out_dir);
  const std::string table = ablation_table(rep);
  std::printf("%s", table.c_str());
  std::ofstream((fs::path(out_dir) / "report.txt").string()) << table;
  return 0;
}

// ------------------------------------------------------------------ verify

int cmd_verify(bool all, const std::vector<std::string>& only, const std::string& work,
               std::string cli_path) {
  if (cli_path.empty()) {
    std::error_code ec;
    const fs::path self = fs::canonical("/proc/self/exe", ec);
    if (!ec) cli_path = self.string();
  }
  CheckContext ctx;
  ctx.cli_path = cli_path;
  ctx.work_dir = work;
  fs::create_directories(work);
  const int failures = run_checks(ctx, only, !all, std::cout);
  if (failures > 0) std::printf("%d check(s) failed\n", failures);
  return failures > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-attention deraining: synthesis, training, inference, verification"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a paired rain dataset");
  ConfigOpts synth_copts;
  std::string synth_out, synth_clean;
  int synth_make = 0, synth_size = 96;
  uint64_t synth_seed = 0;
  add_config_opts(synth, synth_copts);
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--clean", synth_clean, "directory of clean .png images");
  synth->add_option("--make-clean", synth_make, "generate N procedural clean images instead");
  synth->add_option("--size", synth_size, "procedural clean image size (default 96)");
  auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "synthesis seed");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  ConfigOpts train_copts;
  std::string train_out, train_data, train_preset, train_resume, train_variant;
  uint64_t train_seed = 0;
  long long train_iters = 0;
  add_config_opts(train, train_copts);
  train->add_option("--out", train_out, "output directory (checkpoints, logs)")->required();
  train->add_option("--data", train_data, "dataset directory from synth");
  train->add_option("--preset", train_preset, "named setup (overfit4)");
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  train->add_option("--variant", train_variant,
                    "dam_zero|dam_odd|dam_dual|daiam|daiam_stack|ddaiam[N]");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "training seed");
  train->add_option("--iters", train_iters, "override max_iters");

  // derain
  auto* der = app.add_subcommand("derain", "run a checkpoint over a directory of images");
  std::string der_ckpt, der_in, der_out;
  bool der_att = false, der_stages = false;
  der->add_option("--ckpt", der_ckpt, "checkpoint file")->required();
  der->add_option("--in", der_in, "input image directory")->required();
  der->add_option("--out", der_out, "output image directory")->required();
  der->add_flag("--export-attention", der_att, "also write attention maps");
  der->add_flag("--export-stages", der_stages, "also write per-stage outputs and diff maps");

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train|test|all (default test)");
  ev->add_option("--out", ev_out, "directory for per-image records");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and compare several variants");
  ConfigOpts ab_copts;
  std::string ab_data, ab_out, ab_variants = "dam_zero,dam_odd,dam_dual";
  std::string ab_seeds = "1,2,3";
  add_config_opts(ab, ab_copts);
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--variants", ab_variants, "comma-separated variant list");
  ab->add_option("--seeds", ab_seeds, "comma-separated seed list");

  // verify
  auto* ver = app.add_subcommand("verify", "run the invariant and release checks");
  bool ver_all = false;
  std::vector<std::string> ver_only;
  std::string ver_work = "verify_work", ver_cli;
  ver->add_flag("--all", ver_all, "include the slow training-based checks");
  ver->add_option("--only", ver_only, "run only the named check(s)");
  ver->add_option("--work", ver_work, "scratch directory (default verify_work)");
  ver->add_option("--cli", ver_cli, "path to this executable for subprocess checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth(synth_copts, synth_out, synth_clean, synth_make, synth_size, synth_seed,
                       synth_seed_opt->count() > 0);
    if (train->parsed())
      return cmd_train(train_copts, train_out, train_data, train_preset, train_resume,
                       train_variant, train_seed, train_seed_opt->count() > 0, train_iters);
    if (der->parsed()) return cmd_derain(der_ckpt, der_in, der_out, der_att, der_stages);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_out);
    if (ab->parsed()) return cmd_ablate(ab_copts, ab_data, ab_out, ab_variants, ab_seeds);
    if (ver->parsed()) return cmd_verify(ver_all, ver_only, ver_work, ver_cli);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
