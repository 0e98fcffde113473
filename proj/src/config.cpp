#include "csrvolsr/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "csrvolsr/error.hpp"

namespace csrvolsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && text[0] == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw Error(ErrorKind::InvalidConfig, key + ": expected a number, got '" + text + "'");
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const char* first = text.data();
  const char* last = first + text.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw Error(ErrorKind::InvalidConfig, key + ": expected an integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error(ErrorKind::InvalidConfig, key + ": expected true/false, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(key, trim(item)));
  if (out.empty()) throw Error(ErrorKind::InvalidConfig, key + ": empty list");
  return out;
}

std::string normalise(const ConfigKey& k, const std::string& value) {
  const std::string v = trim(value);
  switch (k.type) {
    case KeyType::integer:
      return std::to_string(parse_int(k.name, v));
    case KeyType::real:
      return format_real(parse_real(k.name, v));
    case KeyType::boolean:
      return parse_bool(k.name, v) ? "true" : "false";
    case KeyType::real_list: {
      std::string out;
      for (double x : parse_list(k.name, v)) {
        if (!out.empty()) out += ',';
        out += format_real(x);
      }
      return out;
    }
    case KeyType::text:
      return v;
  }
  return v;
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  using K = KeyType;
  static const std::vector<ConfigKey> keys = {
      {"seed", K::integer, "0", "root seed for every random stream"},
      {"run.name", K::text, "csr", "run directory name"},
      {"paths.cache_dir", K::text, "", "prepared patch cache (empty: $CSRVOLSR_CACHE_DIR or ./cache)"},
      {"paths.run_dir", K::text, "runs", "parent of run directories"},
      {"prepare.patches_per_volume", K::integer, "9", "source patches per training volume"},
      {"prepare.patch_size", K::integer, "40", "source patch edge length"},
      {"train.lr0", K::real, "0.0001", "initial learning rate"},
      {"train.batch_size", K::integer, "9", "patches per step"},
      {"train.epochs", K::integer, "1000", "epochs"},
      {"train.lr_decay_every", K::integer, "200", "epochs between learning-rate decays"},
      {"train.lr_decay_factor", K::real, "0.5", "learning-rate decay factor"},
      {"train.lambda_k", K::real, "0.01", "weight of the frequency loss"},
      {"train.scale_min", K::real, "2", "lower training scale"},
      {"train.scale_max", K::real, "3", "upper training scale"},
      {"train.val_every", K::integer, "10", "epochs between validations"},
      {"train.val_scale", K::real, "2", "validation scale"},
      {"train.checkpoint_every", K::integer, "1", "epochs between last.ckpt writes"},
      {"train.redraw_patches", K::boolean, "false", "re-extract training patches every epoch"},
      {"train.adam_beta1", K::real, "0.9", "Adam beta1"},
      {"train.adam_beta2", K::real, "0.999", "Adam beta2"},
      {"train.adam_eps", K::real, "1e-08", "Adam epsilon"},
      {"ablation.use_t1", K::boolean, "true", "feed the T1w channel (false: zero-filled)"},
      {"ablation.use_freq_loss", K::boolean, "true", "include the frequency loss"},
      {"ablation.strict_one_channel", K::boolean, "false", "one-channel encoder instead of zero-filling"},
      {"encoder.num_blocks", K::integer, "4", "residual dense blocks (D)"},
      {"encoder.convs_per_block", K::integer, "4", "convolutions per block (C)"},
      {"encoder.growth_rate", K::integer, "32", "growth rate (G)"},
      {"encoder.base_channels", K::integer, "64", "base channels (G0)"},
      {"decoder.num_layers", K::integer, "8", "fully connected layers"},
      {"decoder.hidden_width", K::integer, "256", "hidden width"},
      {"decoder.skip_at", K::integer, "4", "input re-injected after this ReLU"},
      {"infer.tile_size", K::integer, "40", "LR tile edge length"},
      {"infer.tile_overlap", K::integer, "8", "LR tile overlap"},
      {"infer.query_chunk", K::integer, "65536", "decoder queries per chunk"},
      {"eval.scales", K::real_list, "2,3,4,2.4", "evaluation scales"},
      {"eval.peak", K::real, "1", "PSNR/SSIM peak value"},
      {"eval.mask", K::boolean, "true", "restrict metrics to the foreground"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = normalise(k, k.default_value);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const ConfigKey* k = find_key(key);
  if (!k) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
  values_[key] = normalise(*k, value);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << canonical_text();
}

const std::string& RunConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const { return parse_int(key, raw(key)); }
double RunConfig::get_real(const std::string& key) const { return parse_real(key, raw(key)); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, raw(key)); }
std::vector<double> RunConfig::get_reals(const std::string& key) const { return parse_list(key, raw(key)); }

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  auto i = [&](const char* k) { return static_cast<int>(get_int(k)); };
  c.lr0 = get_real("train.lr0");
  c.batch_size = i("train.batch_size");
  c.epochs = i("train.epochs");
  c.lr_decay_every = i("train.lr_decay_every");
  c.lr_decay_factor = get_real("train.lr_decay_factor");
  c.lambda_k = get_real("train.lambda_k");
  c.seed = static_cast<std::uint64_t>(get_int("seed"));
  c.use_t1 = get_bool("ablation.use_t1");
  c.use_freq_loss = get_bool("ablation.use_freq_loss");
  c.strict_one_channel = get_bool("ablation.strict_one_channel");
  c.encoder.num_blocks = i("encoder.num_blocks");
  c.encoder.convs_per_block = i("encoder.convs_per_block");
  c.encoder.growth_rate = i("encoder.growth_rate");
  c.encoder.base_channels = i("encoder.base_channels");
  c.decoder.num_layers = i("decoder.num_layers");
  c.decoder.hidden_width = i("decoder.hidden_width");
  c.decoder.skip_at = i("decoder.skip_at");
  c.scale_range = {get_real("train.scale_min"), get_real("train.scale_max")};
  c.val_scale = get_real("train.val_scale");
  c.val_every = i("train.val_every");
  c.checkpoint_every = i("train.checkpoint_every");
  c.adam_beta1 = get_real("train.adam_beta1");
  c.adam_beta2 = get_real("train.adam_beta2");
  c.adam_eps = get_real("train.adam_eps");
  c.redraw_patches = get_bool("train.redraw_patches");
  c.patches_per_volume = i("prepare.patches_per_volume");
  c.patch_size = i("prepare.patch_size");
  c.validate();
  return c;
}

std::filesystem::path RunConfig::run_dir() const {
  std::string name = raw("run.name");
  if (!get_bool("ablation.use_t1")) name += "-noT1";
  if (!get_bool("ablation.use_freq_loss")) name += "-noLk";
  return std::filesystem::path(raw("paths.run_dir")) / name;
}

std::filesystem::path RunConfig::cache_dir() const {
  if (!raw("paths.cache_dir").empty()) return raw("paths.cache_dir");
  if (const char* env = std::getenv("CSRVOLSR_CACHE_DIR"); env && *env) return env;
  return "cache";
}

std::string config_help() {
  std::string out = "Config keys (key = default):\n";
  for (const auto& k : config_keys()) {
    std::string line = "  " + k.name + " = " + (k.default_value.empty() ? "\"\"" : k.default_value);
    if (line.size() < 44) line.resize(44, ' ');
    out += line + "  " + k.help + "\n";
  }
  return out;
}

}  // namespace csrvolsr
