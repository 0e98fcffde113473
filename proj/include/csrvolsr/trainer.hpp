#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csrvolsr/model.hpp"
#include "csrvolsr/objective.hpp"
#include "csrvolsr/patch_pipeline.hpp"

namespace csrvolsr {

struct TrainConfig {
  double lr0 = 1e-4;
  int batch_size = 9;
  int epochs = 1000;
  int lr_decay_every = 200;
  double lr_decay_factor = 0.5;
  double lambda_k = kDefaultLambdaK;
  std::uint64_t seed = 0;
  bool use_t1 = true;
  bool use_freq_loss = true;
  bool strict_one_channel = false;
  EncoderConfig encoder;
  DecoderConfig decoder;
  ScaleRange scale_range{2.0, 3.0};
  double val_scale = 2.0;
  int val_every = 10;
  int checkpoint_every = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool redraw_patches = false;
  int patches_per_volume = kPatchesPerVolume;
  int patch_size = kSourcePatchSize;

  ModelConfig model_config() const;
  void validate() const;
};

/// lr0 * factor^floor(epoch / every); EpochOutOfRange outside [0, epochs).
double lr_at_epoch(int epoch, const TrainConfig& cfg);

struct AdamState {
  ParamSet<float> m_encoder;
  ParamSet<float> v_encoder;
  ParamSet<float> m_decoder;
  ParamSet<float> v_decoder;
  std::int64_t step = 0;

  static AdamState zeros_for(const Model<float>& model);
};

/// One bias-corrected Adam update of every encoder and decoder parameter.
void adam_update(Model<float>& model, const ModelGrads<float>& grads, AdamState& state, double lr,
                 const TrainConfig& cfg);

/// Forward, loss and backward over a batch that shares one scale, then a
/// single Adam step. Throws NonFiniteLoss before touching the parameters.
LossReport train_step(std::span<const MultiChannelPatchPair> batch, Model<float>& model, AdamState& state,
                      const TrainConfig& cfg, double lr);

/// Loss and gradients of a batch without updating (exposed for checks).
template <typename T>
LossReport batch_gradients(std::span<const MultiChannelPatchPair> batch, const Model<T>& model,
                           const TrainConfig& cfg, ModelGrads<T>& grads);

struct ValRecord {
  int epoch = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct Checkpoint {
  std::string config_text;
  Model<float> model;
  AdamState optimizer;
  int epoch = 0;  // completed epochs
  std::int64_t step = 0;
  std::vector<ValRecord> history;
  double best_val_psnr = -std::numeric_limits<double>::infinity();
  std::uint64_t train_log_bytes = 0;
  std::uint64_t val_log_bytes = 0;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Single-file archive: a text manifest (format version, counters, history
/// and the canonical config) followed by named little-endian tensors. Written
/// to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Source patches for training and validation.
struct TrainingData {
  std::vector<SourcePatch> train;
  std::vector<SourcePatch> val;
  /// Only needed when patches are re-drawn every epoch.
  std::vector<MultiChannelVolume> train_volumes;
};

/// Reads a prepared cache directory (manifest.tsv + <subject>.patches).
TrainingData load_training_data(const std::filesystem::path& cache_dir, bool with_volumes = false);

struct FitOptions {
  std::filesystem::path run_dir;
  std::string config_text;
  std::optional<std::filesystem::path> resume_from;
  /// Stop (after checkpointing) once this many epochs are complete; -1 = run all.
  int stop_after_epoch = -1;
  std::function<void(const std::string&)> progress;
};

/// Validation PSNR/SSIM over the given source patches at `scale`.
ValRecord validate_patches(const Model<float>& model, const std::vector<SourcePatch>& patches, double scale);

/// Runs the schedule, writing train.log, val.log, last.ckpt and best.ckpt
/// under run_dir. Returns the final state.
Checkpoint fit(const TrainingData& data, const TrainConfig& cfg, const FitOptions& options);

}  // namespace csrvolsr
