#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gwad/array.hpp"
#include "gwad/rng.hpp"

namespace gwad {

inline constexpr std::size_t kSampleLen = 200;   // time steps per window
inline constexpr std::size_t kDetectors = 2;     // interferometers
inline constexpr std::size_t kSampleSize = kSampleLen * kDetectors;

// One 200x2 window, row-major [time][detector].
struct SignalSample {
  std::array<float, kSampleSize> values{};
};
static_assert(sizeof(SignalSample) == kSampleSize * sizeof(float));

struct LabeledDataset {
  std::vector<SignalSample> samples;
  std::vector<std::int32_t> labels;     // 0 background, 1 signal
  std::vector<std::int32_t> class_ids;  // index into class_names
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;  // provenance

  std::size_t size() const { return samples.size(); }
  std::span<const float> sample(std::size_t i) const {
    return {samples[i].values.data(), kSampleSize};
  }
};

// ---- GWAD container ---------------------------------------------------------
//
// magic "GWAD", u16 version=1 LE, u8 dtype (0 = f32 LE), u8 rank,
// rank x u64 LE dims, row-major payload, trailing u32 CRC32 of the payload.

struct GwadArray {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

void write_gwad(const std::filesystem::path& path, const GwadArray& array);
GwadArray read_gwad(const std::filesystem::path& path);

// ---- Manifest ---------------------------------------------------------------
//
// UTF-8 lines: class_name <TAB> path <TAB> label. Paths are taken relative
// to the manifest's own directory.

struct ManifestEntry {
  std::string class_name;
  std::string path;
  std::int32_t label = 0;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestEntry> entries);

// Loads every class file named by the manifest, in manifest order. Each file
// must be rank-3 [n, 200, 2].
LabeledDataset load_dataset(const std::filesystem::path& manifest_path);

// ---- Synthetic data -----------------------------------------------------------
//
// Stand-in for the unavailable competition data: unit-variance Gaussian
// background plus two injection families. Amplitude defaults are calibrated
// so a small model separates the classes well but not perfectly.

struct SynthConfig {
  std::size_t count_background = 2000;
  std::size_t count_bbh = 2000;
  std::size_t count_sglf = 2000;

  double sample_rate_hz = 4096.0;
  float noise_std = 1.0f;

  // linear chirp with a rising power-law envelope
  float bbh_f_start_hz = 40.0f;
  float bbh_f_end_hz = 360.0f;
  float bbh_env_power = 2.0f;
  float bbh_amp_min = 1.4f;
  float bbh_amp_max = 2.6f;

  // sine-Gaussian, frequency drawn low in band
  float sglf_f_min_hz = 30.0f;
  float sglf_f_max_hz = 120.0f;
  float sglf_tau_min_s = 0.004f;
  float sglf_tau_max_s = 0.012f;
  float sglf_amp_min = 1.6f;
  float sglf_amp_max = 3.0f;

  // second detector carries the same injection, scaled and shifted
  float det2_ratio_min = 0.6f;
  float det2_ratio_max = 1.0f;
  int det2_shift_min = -4;
  int det2_shift_max = 4;

  std::uint64_t seed = 0;
};

void validate(const SynthConfig& config);  // throws ConfigError

struct BbhParams {
  float amp = 0, ratio = 1;
  int shift = 0;
};
struct SglfParams {
  float freq_hz = 0, tau_s = 0, amp = 0, phase = 0, ratio = 1;
  int shift = 0;
};

// Parameter draws come before any noise draws, so the clean waveform of a
// generated sample can be reproduced from the same derived seed. Per-sample
// seeds are derive_seed(config.seed, "synth.<class>", index).
BbhParams draw_bbh_params(Rng& rng, const SynthConfig& config);
SglfParams draw_sglf_params(Rng& rng, const SynthConfig& config);

// Noise-free injections, [time][detector] layout.
SignalSample render_bbh(const SynthConfig& config, const BbhParams& params);
SignalSample render_sglf(const SynthConfig& config, const SglfParams& params);

struct SynthResult {
  LabeledDataset merged;  // background then bbh then sglf
  std::vector<GwadArray> class_arrays;
  std::vector<std::string> class_names;
  std::vector<std::int32_t> class_labels;
};

SynthResult generate_synthetic(const SynthConfig& config);

// ---- Split and batches --------------------------------------------------------

struct SplitSpec {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
  std::uint64_t seed = 0;
};

struct SplitResult {
  LabeledDataset train, val, test;
};

// Deterministic seeded permutation per label group (stratified), then a
// contiguous cut: floor(train*n) and floor(val*n) per group, remainder to
// test.
SplitResult split(const LabeledDataset& dataset, const SplitSpec& spec);

// Fresh permutation for one epoch, chopped into batches; the final partial
// batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t epoch_seed);

// Copies the indexed rows into a [batch, 200, 2] array plus labels.
template <typename T>
Array<T> gather_inputs(const LabeledDataset& dataset,
                       std::span<const std::size_t> indices);
std::vector<std::int32_t> gather_labels(const LabeledDataset& dataset,
                                        std::span<const std::size_t> indices);

}  // namespace gwad
