// gwad: generate, augment, train, evaluate, and score gravitational-wave
// anomaly-detection datasets and models.

#include <zlib.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "gwad/augment.hpp"
#include "gwad/checkpoint.hpp"
#include "gwad/dataio.hpp"
#include "gwad/runconfig.hpp"
#include "gwad/trainer.hpp"

namespace fs = std::filesystem;
using namespace gwad;

namespace {

constexpr const char* kAugMarker = ".aug";

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_config = true) {
  if (with_config)
    cmd->add_option("--config", opts.config_path, "key=value config file");
  cmd->add_option("--seed", opts.seed, "root seed (overrides config and GW_SEED)");
  cmd->add_option("--set", opts.overrides,
                  "config override KEY=VALUE (repeatable, wins over the file)");
}

// Precedence: defaults < file < GW_SEED < --set < --seed.
RunConfig resolve(const CommonOpts& opts) {
  KeyValueConfig kv = opts.config_path.empty()
                          ? KeyValueConfig{}
                          : KeyValueConfig::parse_file(opts.config_path);
  if (const char* env = std::getenv("GW_SEED"); env && *env)
    kv.set("seed", env);
  for (const auto& kvpair : opts.overrides) {
    auto eq = kvpair.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects KEY=VALUE, got '" + kvpair + "'");
    kv.set(kvpair.substr(0, eq), kvpair.substr(eq + 1));
  }
  if (opts.seed) kv.set("seed", std::to_string(*opts.seed));
  return resolve_run_config(kv);
}

std::uint32_t file_crc32(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                static_cast<uInt>(f.gcount()));
  return static_cast<std::uint32_t>(crc);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text;
}

bool is_augmented_class(const std::string& class_name) {
  return class_name.find(kAugMarker) != std::string::npos;
}

// Originals get the 70/10/20 treatment; classes carrying the ".aug" marker
// go entirely into the training split so validation and test stay clean.
SplitResult split_with_aug_classes(const LabeledDataset& ds,
                                   const SplitSpec& spec) {
  LabeledDataset originals, augmented;
  originals.class_names = ds.class_names;
  originals.seed = ds.seed;
  augmented.class_names = ds.class_names;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto cid = static_cast<std::size_t>(ds.class_ids[i]);
    auto& dst = is_augmented_class(ds.class_names[cid]) ? augmented : originals;
    dst.samples.push_back(ds.samples[i]);
    dst.labels.push_back(ds.labels[i]);
    dst.class_ids.push_back(ds.class_ids[i]);
  }
  SplitResult parts = split(originals, spec);
  if (augmented.size() > 0)
    parts.train = merge_augmented(parts.train, {&augmented, 1});
  return parts;
}

// Split-then-augment path: averages draw only from the training split.
LabeledDataset augment_train_split(const LabeledDataset& train_set,
                                   const AugmentPlan& plan) {
  std::vector<LabeledDataset> parts;
  std::set<std::int32_t> class_ids(train_set.class_ids.begin(),
                                   train_set.class_ids.end());
  for (std::int32_t cid : class_ids) {
    LabeledDataset subset;
    subset.class_names = train_set.class_names;
    for (std::size_t i = 0; i < train_set.size(); ++i)
      if (train_set.class_ids[i] == cid) {
        subset.samples.push_back(train_set.samples[i]);
        subset.labels.push_back(train_set.labels[i]);
        subset.class_ids.push_back(cid);
      }
    AugmentPlan class_plan = plan;
    class_plan.seed = derive_seed(plan.seed, "class", static_cast<std::uint64_t>(cid));
    parts.push_back(augment_class(subset, class_plan));
  }
  if (plan.include_originals) return merge_augmented(train_set, parts);
  LabeledDataset merged;
  merged.class_names = train_set.class_names;
  merged.seed = train_set.seed;
  return merge_augmented(merged, parts);
}

int cmd_gen(const CommonOpts& opts, const std::string& out_dir) {
  RunConfig rc = resolve(opts);
  fs::create_directories(out_dir);
  auto gen = generate_synthetic(rc.synth);

  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < gen.class_arrays.size(); ++i) {
    std::string file = gen.class_names[i] + ".gwad";
    write_gwad(fs::path(out_dir) / file, gen.class_arrays[i]);
    entries.push_back({gen.class_names[i], file, gen.class_labels[i]});
  }
  write_manifest(fs::path(out_dir) / "manifest.tsv", entries);
  write_text(fs::path(out_dir) / "gen.resolved.cfg", dump_run_config(rc));

  std::printf("wrote %zu class files + manifest.tsv to %s\n", entries.size(),
              out_dir.c_str());
  return 0;
}

int cmd_augment(const CommonOpts& opts, const std::string& in_manifest,
                const std::string& out_dir) {
  RunConfig rc = resolve(opts);
  fs::create_directories(out_dir);
  auto entries = read_manifest(in_manifest);
  fs::path in_base = fs::path(in_manifest).parent_path();

  std::vector<ManifestEntry> out_entries;
  if (rc.augment.include_originals) {
    for (const auto& e : entries) {
      fs::path abs = fs::absolute(in_base / e.path);
      std::error_code ec;
      fs::path rel = fs::relative(abs, fs::absolute(out_dir), ec);
      out_entries.push_back(
          {e.class_name, ec ? abs.string() : rel.string(), e.label});
    }
  }

  for (std::size_t ci = 0; ci < entries.size(); ++ci) {
    const auto& e = entries[ci];
    GwadArray arr = read_gwad(in_base / e.path);
    if (arr.dims.size() != 3 || arr.dims[1] != kSampleLen ||
        arr.dims[2] != kDetectors)
      throw ShapeError("augment: " + e.path + " is not [n, 200, 2]");

    LabeledDataset cls;
    cls.class_names = {e.class_name};
    for (std::size_t i = 0; i < arr.dims[0]; ++i) {
      SignalSample s;
      std::memcpy(s.values.data(), arr.values.data() + i * kSampleSize,
                  sizeof(s.values));
      cls.samples.push_back(s);
      cls.labels.push_back(e.label);
      cls.class_ids.push_back(0);
    }

    AugmentPlan plan = rc.augment;
    plan.seed = derive_seed(rc.augment.seed, "class", ci);
    auto aug = augment_class(cls, plan);

    GwadArray out;
    out.dims = {aug.size(), kSampleLen, kDetectors};
    out.values.reserve(aug.size() * kSampleSize);
    for (const auto& s : aug.samples)
      out.values.insert(out.values.end(), s.values.begin(), s.values.end());
    std::string file = e.class_name + kAugMarker + ".gwad";
    write_gwad(fs::path(out_dir) / file, out);
    out_entries.push_back({e.class_name + kAugMarker, file, e.label});
  }

  write_manifest(fs::path(out_dir) / "manifest.tsv", out_entries);
  write_text(fs::path(out_dir) / "augment.resolved.cfg", dump_run_config(rc));
  std::printf("wrote augmented classes + manifest.tsv to %s\n", out_dir.c_str());
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& manifest,
              const std::string& out_ckpt, std::string history_path,
              std::optional<int> max_epochs) {
  RunConfig rc = resolve(opts);
  if (max_epochs) rc.train.max_epochs = *max_epochs;

  auto ds = load_dataset(manifest);
  bool has0 = false, has1 = false;
  for (auto l : ds.labels) (l ? has1 : has0) = true;
  if (!has0 || !has1)
    throw DomainError("train: manifest must provide both labels");

  auto parts = split_with_aug_classes(ds, rc.split);
  if (rc.augment_in_train)
    parts.train = augment_train_split(parts.train, rc.augment);

  if (history_path.empty()) history_path = out_ckpt + ".history.csv";
  rc.train.checkpoint_path = out_ckpt;
  rc.train.history_path = history_path;

  std::string resolved = dump_run_config(rc);
  char line[160];
  std::snprintf(line, sizeof(line), "# input %s crc32 0x%08x\n",
                fs::path(manifest).filename().c_str(), file_crc32(manifest));
  resolved += line;
  for (const auto& e : read_manifest(manifest)) {
    auto p = fs::path(manifest).parent_path() / e.path;
    std::snprintf(line, sizeof(line), "# input %s crc32 0x%08x\n",
                  e.path.c_str(), file_crc32(p));
    resolved += line;
  }
  write_text(out_ckpt + ".resolved.cfg", resolved);

  Model<float> model(rc.model);
  auto outcome = train(model, parts.train, parts.val, rc.train);

  std::printf("train done: %zu epochs, best val loss %.6f at epoch %d\n",
              outcome.history.records.size(), outcome.best_val_loss,
              outcome.best_epoch);
  std::printf("checkpoint: %s\nhistory: %s\n", out_ckpt.c_str(),
              history_path.c_str());

  auto report = evaluate(model, parts.test, rc.eval_threshold);
  if (report.roc_valid)
    std::printf("test split: auc %.4f tnr %.4f acc %.4f tnr@tpr90 %.4f\n",
                report.auc, report.tnr, report.accuracy, report.tnr_at_tpr90);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest,
             double threshold, const std::string& out_dir) {
  auto loaded = model_from_checkpoint(read_checkpoint_file(ckpt_path));
  const auto& mc = loaded.model.config();
  if (mc.input_len != static_cast<int>(kSampleLen) ||
      mc.input_channels != static_cast<int>(kDetectors))
    throw ConfigError("eval: checkpoint input shape is not [200, 2]");

  auto ds = load_dataset(manifest);
  if (ds.size() == 0) throw DomainError("eval: empty dataset");

  auto report = evaluate(loaded.model, ds, threshold);
  fs::create_directories(out_dir);
  write_report(fs::path(out_dir) / "report.txt", fs::path(out_dir) / "roc.csv",
               report);

  if (!report.roc_valid)
    std::fprintf(stderr,
                 "warning: single-class dataset, ROC/AUC omitted from report\n");
  std::printf("threshold %.6g\n", report.threshold);
  std::printf("tnr %.6g\n", report.tnr);
  std::printf("accuracy %.6g\n", report.accuracy);
  if (report.roc_valid) {
    std::printf("auc %.6g\n", report.auc);
    std::printf("tnr@tpr90 %.6g\n", report.tnr_at_tpr90);
  }
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_csv, double threshold) {
  auto loaded = model_from_checkpoint(read_checkpoint_file(ckpt_path));
  GwadArray arr = read_gwad(in_path);
  if (arr.dims.size() != 3 || arr.dims[1] != kSampleLen ||
      arr.dims[2] != kDetectors)
    throw ShapeError("predict: input must be [n, 200, 2]");

  LabeledDataset ds;
  for (std::size_t i = 0; i < arr.dims[0]; ++i) {
    SignalSample s;
    std::memcpy(s.values.data(), arr.values.data() + i * kSampleSize,
                sizeof(s.values));
    ds.samples.push_back(s);
    ds.labels.push_back(0);
  }

  auto scores = ds.size() ? predict_scores(loaded.model, ds)
                          : std::vector<double>{};
  std::ofstream f(out_csv, std::ios::trunc);
  if (!f) throw FormatError("cannot write " + out_csv);
  f << "index,score,label\n";
  char buf[96];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%d\n", i, scores[i],
                  scores[i] > threshold ? 1 : 0);
    f << buf;
  }
  std::printf("wrote %zu scores to %s\n", scores.size(), out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gravitational-wave anomaly detection pipeline"};
  app.require_subcommand(1);

  CommonOpts gen_opts, aug_opts, train_opts;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, gen_opts);
  gen->add_option("--out-dir", gen_out, "output directory");

  std::string aug_in, aug_out = "augmented";
  auto* aug = app.add_subcommand("augment", "average-augment dataset classes");
  add_common(aug, aug_opts);
  aug->add_option("--in-manifest", aug_in, "input manifest")->required();
  aug->add_option("--out-dir", aug_out, "output directory");

  std::string train_manifest, train_out = "model.ckpt", train_history;
  std::optional<int> train_epochs;
  auto* tr = app.add_subcommand("train", "train the classifier");
  add_common(tr, train_opts);
  tr->add_option("--manifest", train_manifest, "dataset manifest")->required();
  tr->add_option("--out", train_out, "checkpoint output path");
  tr->add_option("--history", train_history, "history CSV path");
  tr->add_option("--max-epochs", train_epochs, "cap the epoch count");

  std::string eval_ckpt, eval_manifest, eval_out = ".";
  double eval_threshold = 0.5;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  ev->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  ev->add_option("--threshold", eval_threshold, "decision threshold");
  ev->add_option("--out-dir", eval_out, "report output directory");

  std::string pred_ckpt, pred_in, pred_out = "scores.csv";
  double pred_threshold = 0.5;
  auto* pr = app.add_subcommand("predict", "score samples from a GWAD file");
  pr->add_option("--checkpoint", pred_ckpt, "model checkpoint")->required();
  pr->add_option("--in", pred_in, "input GWAD array [n,200,2]")->required();
  pr->add_option("--out", pred_out, "output CSV path");
  pr->add_option("--threshold", pred_threshold, "decision threshold");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen(gen_opts, gen_out);
    if (aug->parsed()) return cmd_augment(aug_opts, aug_in, aug_out);
    if (tr->parsed())
      return cmd_train(train_opts, train_manifest, train_out, train_history,
                       train_epochs);
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_manifest, eval_threshold, eval_out);
    if (pr->parsed())
      return cmd_predict(pred_ckpt, pred_in, pred_out, pred_threshold);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // --help exits 0, usage errors exit 1
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
