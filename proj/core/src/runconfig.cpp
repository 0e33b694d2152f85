#include "gwad/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gwad/rng.hpp"

namespace gwad {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: missing '=' on line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config: empty key on line " + std::to_string(lineno));
    kv.values_[key] = value;
  }
  return kv;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KeyValueConfig::contains(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) {
  consumed_[key] = true;
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for key '" + key + "'");
  }
}

std::int64_t KeyValueConfig::get_int(const std::string& key,
                                     std::int64_t fallback) {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for key '" + key + "'");
  }
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key,
                                       std::uint64_t fallback) {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad unsigned integer for key '" + key + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config: bad boolean for key '" + key + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key,
                                              std::vector<int> fallback) {
  consumed_[key] = true;
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  std::istringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("config: bad list element for key '" + key + "'");
    }
  }
  if (out.empty())
    throw ConfigError("config: empty list for key '" + key + "'");
  return out;
}

void KeyValueConfig::reject_unknown() const {
  for (const auto& [key, value] : values_)
    if (!consumed_.count(key))
      throw ConfigError("config: unknown key '" + key + "'");
}

namespace {

std::vector<BlockSpec> parse_blocks(const std::string& text) {
  std::vector<BlockSpec> blocks;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int ch = 0, k = 0, s = 0;
    if (std::sscanf(item.c_str(), "%dx%dx%d", &ch, &k, &s) != 3)
      throw ConfigError("config: model.blocks entries must look like 32x3x2");
    blocks.push_back({ch, k, s});
  }
  return blocks;
}

std::string format_blocks(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (const auto& b : blocks) {
    if (!out.empty()) out += ",";
    out += std::to_string(b.channels) + "x" + std::to_string(b.kernel) + "x" +
           std::to_string(b.stride);
  }
  return out;
}

}  // namespace

RunConfig resolve_run_config(KeyValueConfig& kv) {
  RunConfig rc;
  rc.seed = kv.get_uint("seed", 0);

  auto& sy = rc.synth;
  if (kv.contains("synth.per_class")) {
    auto n = static_cast<std::size_t>(kv.get_int("synth.per_class", 0));
    sy.count_background = sy.count_bbh = sy.count_sglf = n;
  }
  sy.count_background = static_cast<std::size_t>(kv.get_int(
      "synth.count_background", static_cast<std::int64_t>(sy.count_background)));
  sy.count_bbh = static_cast<std::size_t>(
      kv.get_int("synth.count_bbh", static_cast<std::int64_t>(sy.count_bbh)));
  sy.count_sglf = static_cast<std::size_t>(
      kv.get_int("synth.count_sglf", static_cast<std::int64_t>(sy.count_sglf)));
  sy.sample_rate_hz = kv.get_double("synth.sample_rate_hz", sy.sample_rate_hz);
  sy.noise_std = static_cast<float>(kv.get_double("synth.noise_std", sy.noise_std));
  sy.bbh_f_start_hz =
      static_cast<float>(kv.get_double("synth.bbh.f_start_hz", sy.bbh_f_start_hz));
  sy.bbh_f_end_hz =
      static_cast<float>(kv.get_double("synth.bbh.f_end_hz", sy.bbh_f_end_hz));
  sy.bbh_env_power =
      static_cast<float>(kv.get_double("synth.bbh.env_power", sy.bbh_env_power));
  sy.bbh_amp_min =
      static_cast<float>(kv.get_double("synth.bbh.amp_min", sy.bbh_amp_min));
  sy.bbh_amp_max =
      static_cast<float>(kv.get_double("synth.bbh.amp_max", sy.bbh_amp_max));
  sy.sglf_f_min_hz =
      static_cast<float>(kv.get_double("synth.sglf.f_min_hz", sy.sglf_f_min_hz));
  sy.sglf_f_max_hz =
      static_cast<float>(kv.get_double("synth.sglf.f_max_hz", sy.sglf_f_max_hz));
  sy.sglf_tau_min_s =
      static_cast<float>(kv.get_double("synth.sglf.tau_min_s", sy.sglf_tau_min_s));
  sy.sglf_tau_max_s =
      static_cast<float>(kv.get_double("synth.sglf.tau_max_s", sy.sglf_tau_max_s));
  sy.sglf_amp_min =
      static_cast<float>(kv.get_double("synth.sglf.amp_min", sy.sglf_amp_min));
  sy.sglf_amp_max =
      static_cast<float>(kv.get_double("synth.sglf.amp_max", sy.sglf_amp_max));
  sy.det2_ratio_min =
      static_cast<float>(kv.get_double("synth.det2.ratio_min", sy.det2_ratio_min));
  sy.det2_ratio_max =
      static_cast<float>(kv.get_double("synth.det2.ratio_max", sy.det2_ratio_max));
  sy.det2_shift_min =
      static_cast<int>(kv.get_int("synth.det2.shift_min", sy.det2_shift_min));
  sy.det2_shift_max =
      static_cast<int>(kv.get_int("synth.det2.shift_max", sy.det2_shift_max));

  auto& au = rc.augment;
  au.n_values = kv.get_int_list("augment.n_values", au.n_values);
  au.count_per_n = static_cast<std::size_t>(
      kv.get_int("augment.count_per_n", static_cast<std::int64_t>(au.count_per_n)));
  au.include_originals =
      kv.get_bool("augment.include_originals", au.include_originals);
  rc.augment_in_train = kv.get_bool("augment.in_train", rc.augment_in_train);

  auto& mo = rc.model;
  mo.stem_channels =
      static_cast<int>(kv.get_int("model.stem_channels", mo.stem_channels));
  mo.stem_kernel =
      static_cast<int>(kv.get_int("model.stem_kernel", mo.stem_kernel));
  mo.stem_pool = static_cast<int>(kv.get_int("model.stem_pool", mo.stem_pool));
  if (kv.contains("model.blocks"))
    mo.blocks = parse_blocks(kv.get_string("model.blocks", ""));
  else
    kv.get_string("model.blocks", "");  // mark consumed
  if (auto hh = kv.get_int("model.head_hidden", 0); hh > 0) mo.head_hidden = hh;
  mo.post_block_relu = kv.get_bool("model.post_block_relu", mo.post_block_relu);
  mo.standardize_inputs =
      kv.get_bool("model.standardize_inputs", mo.standardize_inputs);

  auto& tr = rc.train;
  tr.max_epochs = static_cast<int>(kv.get_int("train.max_epochs", tr.max_epochs));
  tr.batch_size = static_cast<int>(kv.get_int("train.batch_size", tr.batch_size));
  tr.lr = kv.get_double("train.lr", tr.lr);
  tr.early_stop_patience = static_cast<int>(
      kv.get_int("train.early_stop_patience", tr.early_stop_patience));
  tr.plateau_patience =
      static_cast<int>(kv.get_int("train.plateau_patience", tr.plateau_patience));
  tr.plateau_factor = kv.get_double("train.plateau_factor", tr.plateau_factor);

  auto& sp = rc.split;
  sp.train = kv.get_double("split.train", sp.train);
  sp.val = kv.get_double("split.val", sp.val);
  sp.test = kv.get_double("split.test", sp.test);

  rc.eval_threshold = kv.get_double("eval.threshold", rc.eval_threshold);

  kv.reject_unknown();

  // one root seed fans out to every module
  sy.seed = derive_seed(rc.seed, "synth");
  au.seed = derive_seed(rc.seed, "augment");
  mo.seed = derive_seed(rc.seed, "model.init");
  tr.seed = derive_seed(rc.seed, "train");
  sp.seed = derive_seed(rc.seed, "split");
  return rc;
}

std::string dump_run_config(const RunConfig& rc) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  kv("seed", std::to_string(rc.seed));
  kv("synth.count_background", std::to_string(rc.synth.count_background));
  kv("synth.count_bbh", std::to_string(rc.synth.count_bbh));
  kv("synth.count_sglf", std::to_string(rc.synth.count_sglf));
  kv("synth.sample_rate_hz", fmt_double(rc.synth.sample_rate_hz));
  kv("synth.noise_std", fmt_double(rc.synth.noise_std));
  kv("synth.bbh.f_start_hz", fmt_double(rc.synth.bbh_f_start_hz));
  kv("synth.bbh.f_end_hz", fmt_double(rc.synth.bbh_f_end_hz));
  kv("synth.bbh.env_power", fmt_double(rc.synth.bbh_env_power));
  kv("synth.bbh.amp_min", fmt_double(rc.synth.bbh_amp_min));
  kv("synth.bbh.amp_max", fmt_double(rc.synth.bbh_amp_max));
  kv("synth.sglf.f_min_hz", fmt_double(rc.synth.sglf_f_min_hz));
  kv("synth.sglf.f_max_hz", fmt_double(rc.synth.sglf_f_max_hz));
  kv("synth.sglf.tau_min_s", fmt_double(rc.synth.sglf_tau_min_s));
  kv("synth.sglf.tau_max_s", fmt_double(rc.synth.sglf_tau_max_s));
  kv("synth.sglf.amp_min", fmt_double(rc.synth.sglf_amp_min));
  kv("synth.sglf.amp_max", fmt_double(rc.synth.sglf_amp_max));
  kv("synth.det2.ratio_min", fmt_double(rc.synth.det2_ratio_min));
  kv("synth.det2.ratio_max", fmt_double(rc.synth.det2_ratio_max));
  kv("synth.det2.shift_min", std::to_string(rc.synth.det2_shift_min));
  kv("synth.det2.shift_max", std::to_string(rc.synth.det2_shift_max));
  {
    std::string vals;
    for (int n : rc.augment.n_values) {
      if (!vals.empty()) vals += ",";
      vals += std::to_string(n);
    }
    kv("augment.n_values", vals);
  }
  kv("augment.count_per_n", std::to_string(rc.augment.count_per_n));
  kv("augment.include_originals", rc.augment.include_originals ? "true" : "false");
  kv("augment.in_train", rc.augment_in_train ? "true" : "false");
  kv("model.stem_channels", std::to_string(rc.model.stem_channels));
  kv("model.stem_kernel", std::to_string(rc.model.stem_kernel));
  kv("model.stem_pool", std::to_string(rc.model.stem_pool));
  kv("model.blocks", format_blocks(rc.model.blocks));
  kv("model.head_hidden",
     std::to_string(rc.model.head_hidden ? *rc.model.head_hidden : 0));
  kv("model.post_block_relu", rc.model.post_block_relu ? "true" : "false");
  kv("model.standardize_inputs",
     rc.model.standardize_inputs ? "true" : "false");
  kv("train.max_epochs", std::to_string(rc.train.max_epochs));
  kv("train.batch_size", std::to_string(rc.train.batch_size));
  kv("train.lr", fmt_double(rc.train.lr));
  kv("train.early_stop_patience", std::to_string(rc.train.early_stop_patience));
  kv("train.plateau_patience", std::to_string(rc.train.plateau_patience));
  kv("train.plateau_factor", fmt_double(rc.train.plateau_factor));
  kv("split.train", fmt_double(rc.split.train));
  kv("split.val", fmt_double(rc.split.val));
  kv("split.test", fmt_double(rc.split.test));
  kv("eval.threshold", fmt_double(rc.eval_threshold));
  return out;
}

}  // namespace gwad
