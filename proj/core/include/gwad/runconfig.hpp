#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gwad/augment.hpp"
#include "gwad/dataio.hpp"
#include "gwad/model.hpp"
#include "gwad/trainer.hpp"

namespace gwad {

// Flat UTF-8 key=value file ('#' starts a comment). Every key must be
// consumed by the resolver; leftovers are ConfigErrors naming the key.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::filesystem::path& path);
  static KeyValueConfig parse_text(const std::string& text);

  // Overrides replace file values (flag wins over file).
  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<int> get_int_list(const std::string& key,
                                std::vector<int> fallback);

  // Throws ConfigError on the first unconsumed key.
  void reject_unknown() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> consumed_;
};

// Everything one run needs; resolved from a single file plus overrides.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  AugmentPlan augment;
  bool augment_in_train = false;  // augment the training split inside `train`
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
  double eval_threshold = 0.5;
};

// Precedence: built-in defaults < config file < GW_SEED env (seed only)
// < command-line overrides.
RunConfig resolve_run_config(KeyValueConfig& kv);

// The resolved key=value text logged next to every run for reproducibility.
std::string dump_run_config(const RunConfig& config);

}  // namespace gwad
