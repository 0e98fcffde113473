#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csrvolsr/trainer.hpp"

namespace csrvolsr {

enum class KeyType { integer, real, boolean, text, real_list };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
};

/// Every recognised key, in display order.
const std::vector<ConfigKey>& config_keys();

/// Flat dotted-key run configuration. Unknown keys and unparsable values are
/// InvalidConfig. Values are stored normalised so the canonical text of two
/// equivalent configs is identical.
class RunConfig {
 public:
  RunConfig();

  /// `key = value` lines; blank lines and '#' comments are ignored.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// "key=value".
  void apply_override(const std::string& assignment);

  std::string canonical_text() const;
  void save(const std::filesystem::path& path) const;

  const std::string& raw(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_text(const std::string& key) const { return raw(key); }
  std::vector<double> get_reals(const std::string& key) const;

  TrainConfig train_config() const;
  /// <paths.run_dir>/<run.name>[-noT1][-noLk]
  std::filesystem::path run_dir() const;
  /// paths.cache_dir, else $CSRVOLSR_CACHE_DIR, else ./cache.
  std::filesystem::path cache_dir() const;

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

/// Help listing of every key with its default.
std::string config_help();

}  // namespace csrvolsr
