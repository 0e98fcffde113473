// csrvolsr {prepare|train|infer|eval}
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "csrvolsr/config.hpp"
#include "csrvolsr/error.hpp"
#include "csrvolsr/metrics.hpp"
#include "csrvolsr/nifti.hpp"
#include "csrvolsr/patch_pipeline.hpp"
#include "csrvolsr/png_writer.hpp"
#include "csrvolsr/superres_engine.hpp"
#include "csrvolsr/trainer.hpp"
#include "csrvolsr/volume_io.hpp"

namespace fs = std::filesystem;
using namespace csrvolsr;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_usage_kind(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::MissingFile:
    case ErrorKind::InvalidScale:
    case ErrorKind::CheckpointIncompatible:
    case ErrorKind::EmptySplit:
      return true;
    default:
      return false;
  }
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("expected comma-separated integers, got '" + text + "'");
    }
  }
  return out;
}

// ---- prepare ---------------------------------------------------------------

struct PrepareArgs {
  std::string manifest;
  std::string root;
  std::string splits = "70,10,20";
  std::string out;
  std::uint64_t seed = 0;
  int patches = kPatchesPerVolume;
  int size = kSourcePatchSize;
};

int cmd_prepare(const PrepareArgs& a) {
  if (a.manifest.empty() == a.root.empty()) throw UsageError("give exactly one of --manifest or --root");
  DatasetManifest manifest;
  if (!a.manifest.empty()) {
    manifest = read_manifest(a.manifest);
  } else {
    const auto c = parse_ints(a.splits);
    if (c.size() != 3) throw UsageError("--splits needs train,val,test counts");
    manifest = build_manifest(a.root, {c[0], c[1], c[2]}, a.seed);
  }
  manifest.seed = a.seed;

  // Validate every path before any work.
  for (auto& e : manifest.entries) {
    for (const auto* p : {&e.dwi_path, &e.t1_path})
      if (!fs::exists(*p)) {
        std::cerr << "error: missing file " << p->string() << "\n";
        if (e.line > 0) std::cerr << "  line " << e.line << ": " << e.raw << "\n";
        return kExitUsage;
      }
    e.dwi_path = fs::absolute(e.dwi_path).lexically_normal();
    e.t1_path = fs::absolute(e.t1_path).lexically_normal();
  }

  fs::create_directories(a.out);
  std::size_t total = 0;
  for (const auto& e : manifest.entries) {
    const MultiChannelVolume vol = load_subject(e.dwi_path, e.t1_path);
    Rng rng(derive_seed(a.seed, "prepare." + e.subject_id));
    PatchCacheFile cache;
    cache.subject_id = e.subject_id;
    cache.seed = a.seed;
    cache.patches = extract_patches(vol, a.patches, a.size, rng);
    write_patch_cache(fs::path(a.out) / (e.subject_id + ".patches"), cache);
    total += cache.patches.size();
    std::cout << e.subject_id << "\t" << to_string(e.split) << "\t" << cache.patches.size() << " patches\n";
  }
  write_manifest(fs::path(a.out) / "manifest.tsv", manifest);
  std::cout << "prepared " << manifest.entries.size() << " subjects, " << total << " patches in " << a.out << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string resume;
  int stop_after = -1;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig() : RunConfig::load(a.config);
  for (const auto& o : a.overrides) cfg.apply_override(o);
  const TrainConfig tc = cfg.train_config();
  const fs::path cache = cfg.cache_dir();
  if (!fs::exists(cache / "manifest.tsv"))
    throw UsageError("no prepared cache at " + cache.string() + " (run prepare or set CSRVOLSR_CACHE_DIR)");

  const fs::path dir = cfg.run_dir();
  fs::create_directories(dir);
  cfg.save(dir / "config.txt");

  const TrainingData data = load_training_data(cache, tc.redraw_patches);
  FitOptions opt;
  opt.run_dir = dir;
  opt.config_text = cfg.canonical_text();
  if (!a.resume.empty()) opt.resume_from = fs::path(a.resume);
  opt.stop_after_epoch = a.stop_after;
  opt.progress = [](const std::string& m) { std::cout << m << std::endl; };
  std::cout << "run directory " << dir.string() << ": " << data.train.size() << " training patches, "
            << data.val.size() << " validation patches\n";
  const Checkpoint done = fit(data, tc, opt);
  std::cout << "finished epoch " << done.epoch << ", step " << done.step << ", best val psnr " << done.best_val_psnr << "\n";
  return 0;
}

// ---- infer -----------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  double scale = 0.0;
  std::string target_shape;
  std::string out;
  std::string png;
  int tile_size = -1;
  int tile_overlap = -1;
};

Checkpoint open_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

int cmd_infer(const InferArgs& a) {
  const bool has_scale = a.scale != 0.0;
  if (has_scale == !a.target_shape.empty()) throw UsageError("give exactly one of --scale or --target-shape");
  if (has_scale && !(a.scale > 1.0)) throw UsageError("scale must exceed 1");
  for (const auto& p : a.inputs)
    if (!fs::exists(p)) throw UsageError("input not found: " + p);
  const Checkpoint ck = open_checkpoint(a.checkpoint);
  const RunConfig cfg = RunConfig::parse(ck.config_text);

  SRRequest req;
  req.lr = a.inputs.size() == 2 ? load_subject(a.inputs[0], a.inputs[1]) : load_multichannel(a.inputs[0]);
  req.tile_size = a.tile_size > 0 ? a.tile_size : static_cast<int>(cfg.get_int("infer.tile_size"));
  req.tile_overlap = a.tile_overlap >= 0 ? a.tile_overlap : static_cast<int>(cfg.get_int("infer.tile_overlap"));
  req.query_chunk = static_cast<std::size_t>(cfg.get_int("infer.query_chunk"));
  if (has_scale) {
    req.scale = a.scale;
  } else {
    const auto t = parse_ints(a.target_shape);
    if (t.size() != 3) throw UsageError("--target-shape needs three integers");
    req.target_shape = Shape3{t[0], t[1], t[2]};
  }
  const Volume hr = super_resolve(req, ck.model);
  save_volume(a.out, hr);
  if (!a.png.empty()) write_triptych_png(a.png, hr);
  std::cout << to_string(req.lr.shape) << " -> " << to_string(hr.shape) << " written to " << a.out << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string scales;
  std::string out;
  bool no_mask = false;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.manifest)) throw UsageError("manifest not found: " + a.manifest);
  const Checkpoint ck = open_checkpoint(a.checkpoint);
  const RunConfig cfg = RunConfig::parse(ck.config_text);
  EvalOptions opt;
  RunConfig scratch;
  if (!a.scales.empty()) scratch.set("eval.scales", a.scales);
  opt.scales = a.scales.empty() ? cfg.get_reals("eval.scales") : scratch.get_reals("eval.scales");
  opt.peak = cfg.get_real("eval.peak");
  opt.mask = cfg.get_bool("eval.mask") && !a.no_mask;
  opt.tile_size = static_cast<int>(cfg.get_int("infer.tile_size"));
  opt.tile_overlap = static_cast<int>(cfg.get_int("infer.tile_overlap"));
  opt.query_chunk = static_cast<std::size_t>(cfg.get_int("infer.query_chunk"));

  const MetricsReport report = evaluate(ck.model, read_manifest(a.manifest), opt);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream(fs::path(a.out) / "report.csv", std::ios::binary) << report.csv();
    std::ofstream(fs::path(a.out) / "report.txt", std::ios::binary) << report.table();
  }
  std::cout << report.table();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Arbitrary-scale super-resolution of DWI volumes guided by a T1w channel"};
  app.require_subcommand(1);
  app.footer(config_help());

  PrepareArgs pa;
  auto* prep = app.add_subcommand("prepare", "Extract and cache training patches");
  prep->add_option("--manifest", pa.manifest, "TSV manifest: subject_id, dwi, t1, split");
  prep->add_option("--root", pa.root, "Directory of subject folders (dwi.nii[.gz], t1.nii[.gz])");
  prep->add_option("--splits", pa.splits, "train,val,test counts with --root")->capture_default_str();
  prep->add_option("--out", pa.out, "Cache directory")->required();
  prep->add_option("--seed", pa.seed, "Root seed")->capture_default_str();
  prep->add_option("--patches-per-volume", pa.patches, "Patches per subject")->capture_default_str();
  prep->add_option("--patch-size", pa.size, "Patch edge length")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the encoder and decoder");
  train->add_option("--config", ta.config, "Config file (key = value lines)");
  train->add_option("--resume", ta.resume, "Checkpoint to continue from");
  train->add_option("--stop-after-epoch", ta.stop_after, "Stop once this many epochs are complete");
  train->add_option("overrides", ta.overrides, "key=value config overrides");
  train->footer(config_help());

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Super-resolve a volume");
  infer->add_option("--checkpoint", ia.checkpoint, "Checkpoint")->required();
  infer->add_option("--in", ia.inputs, "Two-frame prepared volume, or DWI and T1 paths")->required()->expected(1, 2);
  infer->add_option("--scale", ia.scale, "Isotropic scale factor (> 1)");
  infer->add_option("--target-shape", ia.target_shape, "Output shape x,y,z");
  infer->add_option("--out", ia.out, "Output NIfTI path")->required();
  infer->add_option("--png", ia.png, "Centre-slice PNG triptych path");
  infer->add_option("--tile-size", ia.tile_size, "LR tile edge length");
  infer->add_option("--tile-overlap", ia.tile_overlap, "LR tile overlap");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score the model and the tricubic baseline on the test split");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint")->required();
  eval->add_option("--manifest", ea.manifest, "Manifest with a test split")->required();
  eval->add_option("--scales", ea.scales, "Comma-separated scales (default from the checkpoint config)");
  eval->add_option("--out", ea.out, "Directory for report.csv and report.txt");
  eval->add_flag("--no-mask", ea.no_mask, "Score every voxel instead of the foreground");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*prep) return cmd_prepare(pa);
    if (*train) return cmd_train(ta);
    if (*infer) return cmd_infer(ia);
    if (*eval) return cmd_eval(ea);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_usage_kind(e.kind()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
