#include "csrvolsr/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "csrvolsr/config.hpp"
#include "csrvolsr/error.hpp"
#include "csrvolsr/metrics.hpp"
#include "csrvolsr/volume_io.hpp"

namespace csrvolsr {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

ModelConfig TrainConfig::model_config() const {
  ModelConfig m{encoder, decoder, use_t1, strict_one_channel};
  m.encoder.in_channels = m.encoder_channels();
  return m;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
  if (!(lr0 > 0.0)) bad("lr0 must be positive");
  if (batch_size < 1) bad("batch_size must be at least 1");
  if (epochs < 1) bad("epochs must be at least 1");
  if (lr_decay_every < 1) bad("lr_decay_every must be at least 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) bad("lr_decay_factor must lie in (0, 1)");
  if (!(lambda_k >= 0.0)) bad("lambda_k must be non-negative");
  if (!(scale_range.lo > 1.0 && scale_range.lo <= scale_range.hi)) bad("scale range must satisfy 1 < lo <= hi");
  if (!(val_scale > 1.0)) bad("val_scale must exceed 1");
  if (val_every < 1 || checkpoint_every < 1) bad("val_every and checkpoint_every must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0))
    bad("invalid Adam hyperparameters");
  if (patches_per_volume < 1 || patch_size < 1) bad("patch settings must be positive");
  if (scaled_extent(kLrPatchSize, scale_range.hi) > patch_size)
    bad("patch_size too small for the largest training scale");
  ModelConfig m = model_config();
  m.encoder.validate();
  m.decoder.validate();
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw Error(ErrorKind::EpochOutOfRange, "epoch " + std::to_string(epoch) + " outside [0, " +
                                                std::to_string(cfg.epochs) + ")");
  return cfg.lr0 * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

AdamState AdamState::zeros_for(const Model<float>& model) {
  AdamState s;
  s.m_encoder = model.encoder.tensors.zeros_like();
  s.v_encoder = model.encoder.tensors.zeros_like();
  s.m_decoder = model.decoder.tensors.zeros_like();
  s.v_decoder = model.decoder.tensors.zeros_like();
  return s;
}

namespace {

void adam_apply(ParamSet<float>& params, const ParamSet<float>& grads, ParamSet<float>& m, ParamSet<float>& v,
                double lr, double bc1, double bc2, const TrainConfig& cfg) {
  const float b1 = static_cast<float>(cfg.adam_beta1);
  const float b2 = static_cast<float>(cfg.adam_beta2);
  const double eps = cfg.adam_eps;
  for (auto& [name, p] : params) {
    const auto& g = grads[name].data;
    auto& mm = m[name].data;
    auto& vv = v[name].data;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      mm[i] = b1 * mm[i] + (1.0f - b1) * g[i];
      vv[i] = b2 * vv[i] + (1.0f - b2) * g[i] * g[i];
      const double mhat = mm[i] / bc1;
      const double vhat = vv[i] / bc2;
      p.data[i] = static_cast<float>(p.data[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

}  // namespace

void adam_update(Model<float>& model, const ModelGrads<float>& grads, AdamState& state, double lr,
                 const TrainConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  adam_apply(model.encoder.tensors, grads.encoder, state.m_encoder, state.v_encoder, lr, bc1, bc2, cfg);
  adam_apply(model.decoder.tensors, grads.decoder, state.m_decoder, state.v_decoder, lr, bc1, bc2, cfg);
}

template <typename T>
LossReport batch_gradients(std::span<const MultiChannelPatchPair> batch, const Model<T>& model,
                           const TrainConfig& cfg, ModelGrads<T>& grads) {
  if (batch.empty()) throw Error(ErrorKind::PreconditionViolated, "empty batch");
  const Shape3 hr_shape = batch.front().hr_shape;
  for (const auto& p : batch)
    if (p.scale != batch.front().scale || p.hr_shape != hr_shape)
      throw Error(ErrorKind::PreconditionViolated, "all samples of a batch must share one scale");

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double lambda = cfg.use_freq_loss ? cfg.lambda_k : 0.0;
  double sum_r = 0.0, sum_k = 0.0;
  std::vector<T> grad(hr_shape.voxels());
  for (const auto& pair : batch) {
    PatchForward<T> pass(model);
    const auto pred = pass.forward(pair.lr, pair.lr_shape, pair.hr_shape);
    const std::vector<T> target(pair.hr.begin(), pair.hr.end());
    const PatchLoss pl = patch_loss<T>(pred, target, hr_shape, true, true);
    sum_r += pl.mean_abs;
    sum_k += pl.mean_spectral;
    for (std::size_t i = 0; i < grad.size(); ++i)
      grad[i] = static_cast<T>((pl.grad_abs[i] + lambda * pl.grad_spectral[i]) * inv_b);
    pass.backward(grad, grads);
  }
  LossReport r;
  r.l_r = sum_r * inv_b;
  r.l_k = sum_k * inv_b;
  r.lambda_k = lambda;
  r.l_f = r.l_r + lambda * r.l_k;
  return r;
}

LossReport train_step(std::span<const MultiChannelPatchPair> batch, Model<float>& model, AdamState& state,
                      const TrainConfig& cfg, double lr) {
  auto grads = ModelGrads<float>::zeros_for(model);
  const LossReport r = batch_gradients<float>(batch, model, cfg, grads);
  if (!std::isfinite(r.l_f) || !std::isfinite(r.l_k))
    throw Error(ErrorKind::NonFiniteLoss, "l_r=" + std::to_string(r.l_r) + " l_k=" + std::to_string(r.l_k));
  adam_update(model, grads, state, lr, cfg);
  return r;
}

template LossReport batch_gradients<float>(std::span<const MultiChannelPatchPair>, const Model<float>&,
                                           const TrainConfig&, ModelGrads<float>&);
template LossReport batch_gradients<double>(std::span<const MultiChannelPatchPair>, const Model<double>&,
                                            const TrainConfig&, ModelGrads<double>&);

// ---- checkpoint archive ----------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'C', 'S', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint8_t kDtypeF32 = 1;

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorKind::CheckpointError, "truncated checkpoint");
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, kDtypeF32);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
}

struct RawTensor {
  std::vector<int> shape;
  std::vector<float> data;
};

void fill_from(ParamSet<float>& dst, std::map<std::string, RawTensor>& src, const std::string& prefix) {
  for (auto& [name, t] : dst) {
    auto it = src.find(prefix + name);
    if (it == src.end()) throw Error(ErrorKind::CheckpointIncompatible, "missing tensor " + prefix + name);
    if (it->second.shape != t.shape) throw Error(ErrorKind::CheckpointIncompatible, "shape mismatch for " + prefix + name);
    t.data = std::move(it->second.data);
    src.erase(it);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream hdr;
  hdr << "format_version = " << kCheckpointFormatVersion << "\n"
      << "epoch = " << ckpt.epoch << "\n"
      << "step = " << ckpt.step << "\n"
      << "adam_step = " << ckpt.optimizer.step << "\n"
      << "best_val_psnr = " << fmt_g17(ckpt.best_val_psnr) << "\n"
      << "train_log_bytes = " << ckpt.train_log_bytes << "\n"
      << "val_log_bytes = " << ckpt.val_log_bytes << "\n"
      << "history =";
  for (const auto& h : ckpt.history) hdr << " " << h.epoch << ":" << fmt_g17(h.psnr) << ":" << fmt_g17(h.ssim);
  hdr << "\n[config]\n" << ckpt.config_text;
  const std::string header = hdr.str();

  std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
  for (const auto& [n, t] : ckpt.model.encoder.tensors) tensors.emplace_back(n, &t);
  for (const auto& [n, t] : ckpt.model.decoder.tensors) tensors.emplace_back(n, &t);
  for (const auto& [n, t] : ckpt.optimizer.m_encoder) tensors.emplace_back("adam.m." + n, &t);
  for (const auto& [n, t] : ckpt.optimizer.m_decoder) tensors.emplace_back("adam.m." + n, &t);
  for (const auto& [n, t] : ckpt.optimizer.v_encoder) tensors.emplace_back("adam.v." + n, &t);
  for (const auto& [n, t] : ckpt.optimizer.v_decoder) tensors.emplace_back("adam.v." + n, &t);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::CheckpointError, "cannot write " + tmp.string());
    out.write(kCkptMagic, sizeof kCkptMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [n, t] : tensors) put_tensor(out, n, *t);
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorKind::CheckpointError, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::CheckpointError, "rename to " + path.string() + " failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw Error(ErrorKind::CheckpointError, path.string() + ": not a checkpoint");
  const auto hlen = get<std::uint32_t>(in);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw Error(ErrorKind::CheckpointError, "truncated checkpoint header");

  Checkpoint ck;
  const auto cfg_pos = header.find("[config]\n");
  if (cfg_pos == std::string::npos) throw Error(ErrorKind::CheckpointError, "checkpoint has no config");
  ck.config_text = header.substr(cfg_pos + 9);
  std::istringstream fields(header.substr(0, cfg_pos));
  std::string line;
  std::int64_t adam_step = 0;
  int version = -1;
  while (std::getline(fields, line)) {
    const auto eq = line.find(" =");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = eq + 3 <= line.size() ? line.substr(eq + 3) : "";
    if (key == "format_version") version = std::stoi(val);
    else if (key == "epoch") ck.epoch = std::stoi(val);
    else if (key == "step") ck.step = std::stoll(val);
    else if (key == "adam_step") adam_step = std::stoll(val);
    else if (key == "best_val_psnr") ck.best_val_psnr = std::strtod(val.c_str(), nullptr);
    else if (key == "train_log_bytes") ck.train_log_bytes = std::stoull(val);
    else if (key == "val_log_bytes") ck.val_log_bytes = std::stoull(val);
    else if (key == "history") {
      std::istringstream hs(val);
      std::string item;
      while (hs >> item) {
        ValRecord r;
        const auto a = item.find(':'), b = item.rfind(':');
        r.epoch = std::stoi(item.substr(0, a));
        r.psnr = std::strtod(item.substr(a + 1, b - a - 1).c_str(), nullptr);
        r.ssim = std::strtod(item.substr(b + 1).c_str(), nullptr);
        ck.history.push_back(r);
      }
    }
  }
  if (version != kCheckpointFormatVersion)
    throw Error(ErrorKind::CheckpointIncompatible, "unsupported checkpoint format_version " + std::to_string(version));

  std::map<std::string, RawTensor> raw;
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = get<std::uint32_t>(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    if (get<std::uint8_t>(in) != kDtypeF32) throw Error(ErrorKind::CheckpointError, "unsupported dtype for " + name);
    RawTensor t;
    t.shape.resize(get<std::uint32_t>(in));
    for (auto& d : t.shape) d = static_cast<int>(get<std::uint32_t>(in));
    t.data.resize(Tensor<float>::numel_of(t.shape));
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
    if (!in) throw Error(ErrorKind::CheckpointError, "truncated tensor " + name);
    raw.emplace(std::move(name), std::move(t));
  }

  const ModelConfig mc = RunConfig::parse(ck.config_text).train_config().model_config();
  ck.model.config = mc;
  ck.model.encoder = EncoderParams<float>{mc.encoder, make_encoder_tensors<float>(mc.encoder)};
  ck.model.decoder = DecoderParams<float>{mc.decoder, make_decoder_tensors<float>(mc.decoder)};
  fill_from(ck.model.encoder.tensors, raw, "");
  fill_from(ck.model.decoder.tensors, raw, "");
  ck.optimizer = AdamState::zeros_for(ck.model);
  ck.optimizer.step = adam_step;
  if (raw.count("adam.m." + ck.model.decoder.tensors.begin()->first)) {
    fill_from(ck.optimizer.m_encoder, raw, "adam.m.");
    fill_from(ck.optimizer.m_decoder, raw, "adam.m.");
    fill_from(ck.optimizer.v_encoder, raw, "adam.v.");
    fill_from(ck.optimizer.v_decoder, raw, "adam.v.");
  }
  if (!raw.empty()) throw Error(ErrorKind::CheckpointIncompatible, "unexpected tensor " + raw.begin()->first);
  return ck;
}

// ---- data and fitting ------------------------------------------------------

TrainingData load_training_data(const std::filesystem::path& cache_dir, bool with_volumes) {
  const auto manifest = read_manifest(cache_dir / "manifest.tsv");
  TrainingData data;
  for (const auto& e : manifest.entries) {
    if (e.split == Split::test) continue;
    auto cache = read_patch_cache(cache_dir / (e.subject_id + ".patches"));
    auto& dst = e.split == Split::train ? data.train : data.val;
    for (auto& p : cache.patches) dst.push_back(std::move(p));
    if (with_volumes && e.split == Split::train) data.train_volumes.push_back(load_subject(e.dwi_path, e.t1_path));
  }
  return data;
}

ValRecord validate_patches(const Model<float>& model, const std::vector<SourcePatch>& patches, double scale) {
  ValRecord rec;
  if (patches.empty()) return rec;
  double sum_p = 0.0, sum_s = 0.0;
  for (const auto& sp : patches) {
    const auto pair = make_training_pair(sp, scale, std::nullopt);
    PatchForward<float> pass(model);
    auto pred = pass.forward(pair.lr, pair.lr_shape, pair.hr_shape);
    for (auto& v : pred) v = std::clamp(v, 0.0f, kDwiClipMax);
    sum_p += psnr(pred, pair.hr).value();
    const int w = std::min({11, pair.hr_shape.x, pair.hr_shape.y, pair.hr_shape.z});
    SsimOptions so;
    so.window = w;
    sum_s += ssim3d(pred, pair.hr, pair.hr_shape, so);
  }
  rec.psnr = sum_p / static_cast<double>(patches.size());
  rec.ssim = sum_s / static_cast<double>(patches.size());
  return rec;
}

namespace {

std::string fmt9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::uint64_t file_bytes(const std::filesystem::path& p) {
  std::error_code ec;
  const auto n = std::filesystem::file_size(p, ec);
  return ec ? 0 : n;
}

void truncate_log(const std::filesystem::path& p, std::uint64_t bytes) {
  if (!std::filesystem::exists(p)) {
    if (bytes != 0) throw Error(ErrorKind::CheckpointError, p.string() + " is missing");
    return;
  }
  if (std::filesystem::file_size(p) < bytes) throw Error(ErrorKind::CheckpointError, p.string() + " is shorter than recorded");
  std::filesystem::resize_file(p, bytes);
}

std::vector<SourcePatch> redraw(const TrainingData& data, const TrainConfig& cfg, int epoch) {
  std::vector<SourcePatch> out;
  for (std::size_t v = 0; v < data.train_volumes.size(); ++v) {
    Rng rng(derive_seed(cfg.seed, "patches.epoch", static_cast<std::uint64_t>(epoch) * 1000003u + v));
    auto ps = extract_patches(data.train_volumes[v], cfg.patches_per_volume, cfg.patch_size, rng);
    for (auto& p : ps) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

Checkpoint fit(const TrainingData& data, const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  if (data.train.empty() && data.train_volumes.empty()) throw Error(ErrorKind::EmptySplit, "no training patches");
  if (data.val.empty()) throw Error(ErrorKind::EmptySplit, "no validation patches");
  if (cfg.redraw_patches && data.train_volumes.empty())
    throw Error(ErrorKind::PreconditionViolated, "redraw_patches needs the training volumes");

  const auto& dir = options.run_dir;
  std::filesystem::create_directories(dir);
  const auto train_log_path = dir / "train.log";
  const auto val_log_path = dir / "val.log";
  auto say = [&](const std::string& m) {
    if (options.progress) options.progress(m);
  };

  Checkpoint state;
  if (options.resume_from) {
    state = load_checkpoint(*options.resume_from);
    if (!(state.model.config == cfg.model_config()))
      throw Error(ErrorKind::CheckpointIncompatible, "checkpoint architecture differs from the config");
    truncate_log(train_log_path, state.train_log_bytes);
    truncate_log(val_log_path, state.val_log_bytes);
    say("resuming after epoch " + std::to_string(state.epoch));
  } else {
    state.model = init_model<float>(cfg.model_config(), cfg.seed);
    state.optimizer = AdamState::zeros_for(state.model);
    truncate_log(train_log_path, 0);
    truncate_log(val_log_path, 0);
  }
  state.config_text = options.config_text;

  std::ofstream train_log(train_log_path, std::ios::binary | std::ios::app);
  std::ofstream val_log(val_log_path, std::ios::binary | std::ios::app);
  if (!train_log || !val_log) throw Error(ErrorKind::Io, "cannot open logs in " + dir.string());

  auto sync_sizes = [&] {
    train_log.flush();
    val_log.flush();
    state.train_log_bytes = file_bytes(train_log_path);
    state.val_log_bytes = file_bytes(val_log_path);
  };

  const auto bsz = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const std::vector<SourcePatch> drawn = cfg.redraw_patches ? redraw(data, cfg, epoch) : std::vector<SourcePatch>{};
    const auto& patches = cfg.redraw_patches ? drawn : data.train;
    const double lr = lr_at_epoch(epoch, cfg);

    Rng rng(derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

    for (std::size_t b0 = 0; b0 < order.size(); b0 += bsz) {
      const double s = sample_scale(rng, cfg.scale_range);
      std::vector<MultiChannelPatchPair> batch;
      for (std::size_t i = b0; i < std::min(order.size(), b0 + bsz); ++i)
        batch.push_back(make_training_pair(patches[order[i]], s, cfg.scale_range));
      LossReport r;
      try {
        r = train_step(batch, state.model, state.optimizer, cfg, lr);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::NonFiniteLoss) {
          sync_sizes();
          save_checkpoint(dir / "nonfinite.ckpt", state);
          std::ofstream diag(dir / "nonfinite.txt");
          diag << "epoch " << epoch << " step " << state.step << " scale " << fmt9(s) << "\n" << e.what() << "\n";
        }
        throw;
      }
      ++state.step;
      train_log << epoch << '\t' << state.step << '\t' << fmt9(r.l_r) << '\t' << fmt9(r.l_k) << '\t' << fmt9(r.l_f)
                << '\t' << fmt9(lr) << '\n';
    }
    state.epoch = epoch + 1;
    const bool last = state.epoch == cfg.epochs || state.epoch == options.stop_after_epoch;

    bool improved = false;
    if (state.epoch % cfg.val_every == 0 || state.epoch == cfg.epochs) {
      ValRecord rec = validate_patches(state.model, data.val, cfg.val_scale);
      rec.epoch = state.epoch;
      state.history.push_back(rec);
      val_log << rec.epoch << '\t' << state.step << '\t' << fmt9(rec.psnr) << '\t' << fmt9(rec.ssim) << '\n';
      if (rec.psnr > state.best_val_psnr) {
        state.best_val_psnr = rec.psnr;
        improved = true;
      }
      say("epoch " + std::to_string(state.epoch) + " val psnr " + fmt9(rec.psnr) + " ssim " + fmt9(rec.ssim));
    }
    sync_sizes();
    if (improved) save_checkpoint(dir / "best.ckpt", state);
    if (last || state.epoch % cfg.checkpoint_every == 0) save_checkpoint(dir / "last.ckpt", state);
    if (state.epoch == options.stop_after_epoch) break;
  }
  if (!std::filesystem::exists(dir / "best.ckpt")) save_checkpoint(dir / "best.ckpt", state);
  return state;
}

}  // namespace csrvolsr
