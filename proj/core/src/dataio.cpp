#include "gwad/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

namespace gwad {

// ---- GWAD container ---------------------------------------------------------

void write_gwad(const std::filesystem::path& path, const GwadArray& array) {
  std::uint64_t n = 1;
  for (auto d : array.dims) n *= d;
  if (n != array.values.size())
    throw ShapeError("gwad: dims do not match value count");

  std::string buf;
  buf += "GWAD";
  buf.push_back(1);  // version u16 LE
  buf.push_back(0);
  buf.push_back(0);  // dtype 0 = f32 LE
  buf.push_back(static_cast<char>(array.dims.size()));
  for (auto d : array.dims)
    for (int i = 0; i < 8; ++i)
      buf.push_back(static_cast<char>((d >> (8 * i)) & 0xff));

  std::string payload;
  payload.resize(array.values.size() * 4);
  std::memcpy(payload.data(), array.values.data(), payload.size());
  // values are IEEE f32; this code assumes a little-endian host for payload
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size()));
  buf += payload;
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((crc >> (8 * i)) & 0xff));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("short write to " + path.string());
}

GwadArray read_gwad(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), "GWAD", 4) != 0)
    throw FormatError("gwad: bad magic in " + path.string());
  std::size_t pos = 4;
  auto need = [&](std::size_t n) {
    if (buf.size() - pos < n) throw CorruptFileError("gwad: truncated file");
  };
  need(2);
  std::uint16_t version = static_cast<std::uint16_t>(
      static_cast<unsigned char>(buf[pos]) |
      (static_cast<unsigned char>(buf[pos + 1]) << 8));
  pos += 2;
  if (version != 1) throw FormatError("gwad: unsupported version");
  need(2);
  std::uint8_t dtype = static_cast<unsigned char>(buf[pos++]);
  std::uint8_t rank = static_cast<unsigned char>(buf[pos++]);
  if (dtype != 0) throw FormatError("gwad: unsupported dtype");

  GwadArray out;
  std::uint64_t n = 1;
  for (std::uint8_t r = 0; r < rank; ++r) {
    need(8);
    std::uint64_t d = 0;
    for (int i = 0; i < 8; ++i)
      d |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    out.dims.push_back(d);
    n *= d;
  }
  need(static_cast<std::size_t>(n) * 4 + 4);
  if (buf.size() - pos != static_cast<std::size_t>(n) * 4 + 4)
    throw CorruptFileError("gwad: payload size does not match header");

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data() + pos),
              static_cast<uInt>(n * 4));
  out.values.resize(static_cast<std::size_t>(n));
  std::memcpy(out.values.data(), buf.data() + pos, n * 4);
  pos += static_cast<std::size_t>(n) * 4;

  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
              << (8 * i);
  if (stored != static_cast<std::uint32_t>(crc))
    throw CorruptFileError("gwad: CRC mismatch");
  return out;
}

// ---- Manifest ---------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                             : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError("manifest: malformed line " + std::to_string(lineno));
    ManifestEntry e;
    e.class_name = line.substr(0, t1);
    e.path = line.substr(t1 + 1, t2 - t1 - 1);
    try {
      e.label = std::stoi(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw FormatError("manifest: bad label on line " + std::to_string(lineno));
    }
    if (e.label != 0 && e.label != 1)
      throw FormatError("manifest: label outside {0,1} on line " +
                        std::to_string(lineno));
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write manifest " + path.string());
  for (const auto& e : entries)
    f << e.class_name << '\t' << e.path << '\t' << e.label << '\n';
}

LabeledDataset load_dataset(const std::filesystem::path& manifest_path) {
  auto entries = read_manifest(manifest_path);
  auto base = manifest_path.parent_path();

  LabeledDataset ds;
  for (std::size_t ci = 0; ci < entries.size(); ++ci) {
    const auto& e = entries[ci];
    GwadArray arr = read_gwad(base / e.path);
    if (arr.dims.size() != 3 || arr.dims[1] != kSampleLen ||
        arr.dims[2] != kDetectors)
      throw ShapeError("dataset: " + e.path + " is not [n, 200, 2]");
    ds.class_names.push_back(e.class_name);
    std::size_t n = arr.dims[0];
    for (std::size_t i = 0; i < n; ++i) {
      SignalSample s;
      std::memcpy(s.values.data(), arr.values.data() + i * kSampleSize,
                  kSampleSize * sizeof(float));
      ds.samples.push_back(s);
      ds.labels.push_back(e.label);
      ds.class_ids.push_back(static_cast<std::int32_t>(ci));
    }
  }
  return ds;
}

// ---- Synthetic data ------------------------------------------------------------

void validate(const SynthConfig& c) {
  double nyquist = c.sample_rate_hz / 2.0;
  if (c.sample_rate_hz <= 0) throw ConfigError("synth: sample rate must be positive");
  if (c.noise_std < 0) throw ConfigError("synth: noise_std must be >= 0");
  for (float f : {c.bbh_f_start_hz, c.bbh_f_end_hz, c.sglf_f_min_hz,
                  c.sglf_f_max_hz})
    if (f <= 0 || f >= nyquist)
      throw ConfigError("synth: frequency outside (0, nyquist)");
  if (c.sglf_f_min_hz > c.sglf_f_max_hz)
    throw ConfigError("synth: sglf frequency range inverted");
  if (c.sglf_tau_min_s <= 0 || c.sglf_tau_min_s > c.sglf_tau_max_s)
    throw ConfigError("synth: sglf width range invalid");
  if (c.bbh_amp_min > c.bbh_amp_max || c.sglf_amp_min > c.sglf_amp_max)
    throw ConfigError("synth: amplitude range inverted");
  if (c.bbh_amp_min < 0 || c.sglf_amp_min < 0)
    throw ConfigError("synth: amplitudes must be >= 0");
  if (c.det2_ratio_min > c.det2_ratio_max)
    throw ConfigError("synth: detector-2 ratio range inverted");
  if (c.det2_shift_min > c.det2_shift_max)
    throw ConfigError("synth: detector-2 shift range inverted");
}

BbhParams draw_bbh_params(Rng& rng, const SynthConfig& c) {
  BbhParams p;
  p.amp = static_cast<float>(rng.uniform(c.bbh_amp_min, c.bbh_amp_max));
  p.ratio = static_cast<float>(rng.uniform(c.det2_ratio_min, c.det2_ratio_max));
  p.shift = c.det2_shift_min +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(
                c.det2_shift_max - c.det2_shift_min + 1)));
  return p;
}

SglfParams draw_sglf_params(Rng& rng, const SynthConfig& c) {
  SglfParams p;
  p.freq_hz = static_cast<float>(rng.uniform(c.sglf_f_min_hz, c.sglf_f_max_hz));
  p.tau_s = static_cast<float>(rng.uniform(c.sglf_tau_min_s, c.sglf_tau_max_s));
  p.amp = static_cast<float>(rng.uniform(c.sglf_amp_min, c.sglf_amp_max));
  p.phase = static_cast<float>(rng.uniform(0.0, 2.0 * std::numbers::pi));
  p.ratio = static_cast<float>(rng.uniform(c.det2_ratio_min, c.det2_ratio_max));
  p.shift = c.det2_shift_min +
            static_cast<int>(rng.below(static_cast<std::uint64_t>(
                c.det2_shift_max - c.det2_shift_min + 1)));
  return p;
}

namespace {

// a(t) sin(2 pi (f0 t + k t^2 / 2)), envelope a(t) = amp (t/T)^p
double bbh_waveform(const SynthConfig& c, const BbhParams& p, double t) {
  double T = static_cast<double>(kSampleLen) / c.sample_rate_hz;
  if (t < 0 || t > T) return 0.0;
  double k = (c.bbh_f_end_hz - c.bbh_f_start_hz) / T;
  double envelope = p.amp * std::pow(t / T, static_cast<double>(c.bbh_env_power));
  double phase = 2.0 * std::numbers::pi * (c.bbh_f_start_hz * t + 0.5 * k * t * t);
  return envelope * std::sin(phase);
}

// amp sin(2 pi f t + phi) exp(-(t-t0)^2 / (2 tau^2)), centered in the window
double sglf_waveform(const SynthConfig& c, const SglfParams& p, double t) {
  double T = static_cast<double>(kSampleLen) / c.sample_rate_hz;
  double t0 = T / 2.0;
  double arg = (t - t0) / p.tau_s;
  return p.amp * std::sin(2.0 * std::numbers::pi * p.freq_hz * t + p.phase) *
         std::exp(-0.5 * arg * arg);
}

template <typename Wave>
SignalSample render(const SynthConfig& c, float ratio, int shift, Wave&& wave) {
  SignalSample s;
  double dt = 1.0 / c.sample_rate_hz;
  for (std::size_t i = 0; i < kSampleLen; ++i) {
    s.values[i * 2] = static_cast<float>(wave(static_cast<double>(i) * dt));
    s.values[i * 2 + 1] = static_cast<float>(
        ratio * wave((static_cast<double>(i) - shift) * dt));
  }
  return s;
}

}  // namespace

SignalSample render_bbh(const SynthConfig& c, const BbhParams& p) {
  return render(c, p.ratio, p.shift,
                [&](double t) { return bbh_waveform(c, p, t); });
}

SignalSample render_sglf(const SynthConfig& c, const SglfParams& p) {
  return render(c, p.ratio, p.shift,
                [&](double t) { return sglf_waveform(c, p, t); });
}

SynthResult generate_synthetic(const SynthConfig& config) {
  validate(config);

  SynthResult result;
  result.class_names = {"background", "bbh", "sglf"};
  result.class_labels = {0, 1, 1};
  result.merged.class_names = result.class_names;
  result.merged.seed = config.seed;

  auto emit_class = [&](std::size_t count, const std::string& name,
                        std::int32_t label, std::int32_t class_id) {
    GwadArray arr;
    arr.dims = {count, kSampleLen, kDetectors};
    arr.values.reserve(count * kSampleSize);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(derive_seed(config.seed, "synth." + name, i));
      SignalSample s;
      if (name == "bbh")
        s = render_bbh(config, draw_bbh_params(rng, config));
      else if (name == "sglf")
        s = render_sglf(config, draw_sglf_params(rng, config));
      for (std::size_t j = 0; j < kSampleSize; ++j)
        s.values[j] += static_cast<float>(config.noise_std * rng.gaussian());
      arr.values.insert(arr.values.end(), s.values.begin(), s.values.end());
      result.merged.samples.push_back(s);
      result.merged.labels.push_back(label);
      result.merged.class_ids.push_back(class_id);
    }
    result.class_arrays.push_back(std::move(arr));
  };

  emit_class(config.count_background, "background", 0, 0);
  emit_class(config.count_bbh, "bbh", 1, 1);
  emit_class(config.count_sglf, "sglf", 1, 2);
  return result;
}

// ---- Split and batches ---------------------------------------------------------

SplitResult split(const LabeledDataset& dataset, const SplitSpec& spec) {
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9)
    throw ConfigError("split: fractions must sum to 1");
  if (spec.train < 0 || spec.val < 0 || spec.test < 0)
    throw ConfigError("split: fractions must be non-negative");

  SplitResult out;
  for (auto* part : {&out.train, &out.val, &out.test}) {
    part->class_names = dataset.class_names;
    part->seed = dataset.seed;
  }

  auto append = [&](LabeledDataset& part, std::size_t idx) {
    part.samples.push_back(dataset.samples[idx]);
    part.labels.push_back(dataset.labels[idx]);
    part.class_ids.push_back(
        dataset.class_ids.empty() ? 0 : dataset.class_ids[idx]);
  };

  for (std::int32_t label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset.labels[i] == label) idx.push_back(i);
    if (idx.empty()) continue;

    Rng rng(derive_seed(spec.seed, "split", static_cast<std::uint64_t>(label)));
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.below(i)]);

    auto n = idx.size();
    auto n_train = static_cast<std::size_t>(
        std::floor(spec.train * static_cast<double>(n)));
    auto n_val =
        static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train)
        append(out.train, idx[i]);
      else if (i < n_train + n_val)
        append(out.val, idx[i]);
      else
        append(out.test, idx[i]);
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size < 1) throw DomainError("batches: batch_size must be >= 1");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(epoch_seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

template <typename T>
Array<T> gather_inputs(const LabeledDataset& dataset,
                       std::span<const std::size_t> indices) {
  Array<T> x({indices.size(), kSampleLen, kDetectors});
  T* xp = x.data().data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto row = dataset.sample(indices[b]);
    for (std::size_t j = 0; j < kSampleSize; ++j)
      xp[b * kSampleSize + j] = static_cast<T>(row[j]);
  }
  return x;
}

std::vector<std::int32_t> gather_labels(const LabeledDataset& dataset,
                                        std::span<const std::size_t> indices) {
  std::vector<std::int32_t> labels(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b)
    labels[b] = dataset.labels[indices[b]];
  return labels;
}

template Array<float> gather_inputs<float>(const LabeledDataset&,
                                           std::span<const std::size_t>);
template Array<double> gather_inputs<double>(const LabeledDataset&,
                                             std::span<const std::size_t>);

}  // namespace gwad
