#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "gwad/dataio.hpp"
#include "gwad/metrics.hpp"

using namespace gwad;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// digest of one sample for multiset comparisons
std::uint64_t sample_digest(const SignalSample& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (float v : s.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    h = (h ^ bits) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

TEST_CASE("gwad round trip is bitwise, signed zeros included") {
  auto dir = temp_dir("gwad_io_test");
  GwadArray a;
  a.dims = {7};
  a.values = {0.0f, -0.0f, 1.5f, -3.25e-30f, 1e38f,
              std::numeric_limits<float>::denorm_min(), -1.0f};
  write_gwad(dir / "a.gwad", a);
  auto b = read_gwad(dir / "a.gwad");
  REQUIRE(b.dims == a.dims);
  CHECK(std::memcmp(a.values.data(), b.values.data(),
                    a.values.size() * sizeof(float)) == 0);

  GwadArray big;
  big.dims = {10, kSampleLen, kDetectors};
  Rng rng(5);
  big.values.resize(10 * kSampleSize);
  for (auto& v : big.values) v = static_cast<float>(rng.gaussian());
  write_gwad(dir / "big.gwad", big);
  auto back = read_gwad(dir / "big.gwad");
  CHECK(std::memcmp(big.values.data(), back.values.data(),
                    big.values.size() * sizeof(float)) == 0);

  // empty array still has a valid header
  GwadArray empty;
  empty.dims = {0, kSampleLen, kDetectors};
  write_gwad(dir / "empty.gwad", empty);
  auto e = read_gwad(dir / "empty.gwad");
  CHECK(e.dims[0] == 0);
  CHECK(e.values.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupted gwad files are rejected") {
  auto dir = temp_dir("gwad_corrupt_test");
  GwadArray a;
  a.dims = {10};
  a.values.assign(10, 1.0f);
  write_gwad(dir / "ok.gwad", a);
  std::string bytes = slurp(dir / "ok.gwad");

  // drop one payload value: header says 10 elements, 9 present
  spit(dir / "short.gwad", bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(read_gwad(dir / "short.gwad"), CorruptFileError);

  std::string magic = bytes;
  magic[0] = 'B';
  spit(dir / "magic.gwad", magic);
  CHECK_THROWS_AS(read_gwad(dir / "magic.gwad"), FormatError);

  std::string crc = bytes;
  crc[20] = static_cast<char>(crc[20] ^ 0xff);
  spit(dir / "crc.gwad", crc);
  CHECK_THROWS_AS(read_gwad(dir / "crc.gwad"), CorruptFileError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round trip and dataset loading") {
  auto dir = temp_dir("gwad_manifest_test");
  SynthConfig cfg;
  cfg.count_background = 6;
  cfg.count_bbh = 4;
  cfg.count_sglf = 5;
  cfg.seed = 21;
  auto gen = generate_synthetic(cfg);

  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < gen.class_arrays.size(); ++i) {
    std::string file = gen.class_names[i] + ".gwad";
    write_gwad(dir / file, gen.class_arrays[i]);
    entries.push_back({gen.class_names[i], file, gen.class_labels[i]});
  }
  write_manifest(dir / "manifest.tsv", entries);

  auto ds = load_dataset(dir / "manifest.tsv");
  REQUIRE(ds.size() == 15);
  CHECK(ds.class_names == std::vector<std::string>{"background", "bbh", "sglf"});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds.labels[i] == gen.merged.labels[i]);
    CHECK(sample_digest(ds.samples[i]) == sample_digest(gen.merged.samples[i]));
  }

  spit(dir / "bad.tsv", "background only_two_fields\n");
  CHECK_THROWS_AS(read_manifest(dir / "bad.tsv"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic counts and label histogram") {
  SynthConfig cfg;
  cfg.count_background = 1000;
  cfg.count_bbh = 1000;
  cfg.count_sglf = 1000;
  cfg.seed = 33;
  auto gen = generate_synthetic(cfg);
  REQUIRE(gen.merged.size() == 3000);
  std::map<std::int32_t, int> hist;
  for (auto l : gen.merged.labels) ++hist[l];
  CHECK(hist[0] == 1000);
  CHECK(hist[1] == 2000);
  CHECK(gen.class_arrays[0].dims[0] == 1000);

  // same seed regenerates the same bytes
  auto again = generate_synthetic(cfg);
  for (std::size_t i = 0; i < gen.merged.size(); ++i)
    CHECK(sample_digest(gen.merged.samples[i]) ==
          sample_digest(again.merged.samples[i]));
}

TEST_CASE("noiseless sglf matches the closed form at every step") {
  SynthConfig cfg;
  cfg.count_background = 0;
  cfg.count_bbh = 0;
  cfg.count_sglf = 1;
  cfg.noise_std = 0.0f;
  // degenerate ranges pin every drawn parameter
  cfg.sglf_f_min_hz = cfg.sglf_f_max_hz = 60.0f;
  cfg.sglf_tau_min_s = cfg.sglf_tau_max_s = 0.008f;
  cfg.sglf_amp_min = cfg.sglf_amp_max = 2.0f;
  cfg.det2_ratio_min = cfg.det2_ratio_max = 1.0f;
  cfg.det2_shift_min = cfg.det2_shift_max = 0;
  cfg.seed = 9;
  auto gen = generate_synthetic(cfg);
  REQUIRE(gen.merged.size() == 1);

  // the phase is the only free draw; recover it from the same derived seed
  Rng rng(derive_seed(cfg.seed, "synth.sglf", 0));
  auto params = draw_sglf_params(rng, cfg);

  const auto& s = gen.merged.samples[0];
  double dt = 1.0 / cfg.sample_rate_hz;
  double t0 = kSampleLen * dt / 2.0;
  for (std::size_t i = 0; i < kSampleLen; ++i) {
    double t = i * dt;
    double want = 2.0 * std::sin(2.0 * std::numbers::pi * 60.0 * t + params.phase) *
                  std::exp(-0.5 * std::pow((t - t0) / 0.008, 2));
    CHECK(std::abs(s.values[i * 2] - want) <= 1e-6);
    CHECK(std::abs(s.values[i * 2 + 1] - want) <= 1e-6);
  }
}

TEST_CASE("noiseless bbh chirp matches the closed form") {
  SynthConfig cfg;
  cfg.count_background = 0;
  cfg.count_bbh = 1;
  cfg.count_sglf = 0;
  cfg.noise_std = 0.0f;
  cfg.bbh_amp_min = cfg.bbh_amp_max = 1.5f;
  cfg.det2_ratio_min = cfg.det2_ratio_max = 0.8f;
  cfg.det2_shift_min = cfg.det2_shift_max = 2;
  cfg.seed = 10;
  auto gen = generate_synthetic(cfg);

  const auto& s = gen.merged.samples[0];
  double dt = 1.0 / cfg.sample_rate_hz;
  double T = kSampleLen * dt;
  double k = (cfg.bbh_f_end_hz - cfg.bbh_f_start_hz) / T;
  auto wave = [&](double t) {
    if (t < 0 || t > T) return 0.0;
    return 1.5 * std::pow(t / T, 2.0) *
           std::sin(2.0 * std::numbers::pi *
                    (cfg.bbh_f_start_hz * t + 0.5 * k * t * t));
  };
  for (std::size_t i = 0; i < kSampleLen; ++i) {
    CHECK(std::abs(s.values[i * 2] - wave(i * dt)) <= 1e-6);
    CHECK(std::abs(s.values[i * 2 + 1] - 0.8 * wave((i - 2.0) * dt)) <= 1e-6);
  }
}

TEST_CASE("background statistics") {
  SynthConfig cfg;
  cfg.count_background = 10000;
  cfg.count_bbh = 0;
  cfg.count_sglf = 0;
  cfg.seed = 55;
  auto gen = generate_synthetic(cfg);

  for (std::size_t det = 0; det < kDetectors; ++det) {
    double mean = 0.0, var = 0.0;
    std::size_t n = gen.merged.size() * kSampleLen;
    for (const auto& s : gen.merged.samples)
      for (std::size_t i = 0; i < kSampleLen; ++i) mean += s.values[i * 2 + det];
    mean /= static_cast<double>(n);
    for (const auto& s : gen.merged.samples)
      for (std::size_t i = 0; i < kSampleLen; ++i) {
        double d = s.values[i * 2 + det] - mean;
        var += d * d;
      }
    var /= static_cast<double>(n);
    CHECK(std::abs(mean) <= 0.05);
    CHECK(std::sqrt(var) >= 0.9);
    CHECK(std::sqrt(var) <= 1.1);
  }
}

TEST_CASE("zero-amplitude injections are indistinguishable from background") {
  SynthConfig cfg;
  cfg.count_background = 3400;
  cfg.count_bbh = 3300;
  cfg.count_sglf = 3300;
  cfg.bbh_amp_min = cfg.bbh_amp_max = 0.0f;
  cfg.sglf_amp_min = cfg.sglf_amp_max = 0.0f;
  cfg.seed = 77;
  auto gen = generate_synthetic(cfg);

  // any fixed statistic must sit at chance; use per-sample energy
  std::vector<double> scores;
  for (const auto& s : gen.merged.samples) {
    double e = 0.0;
    for (float v : s.values) e += static_cast<double>(v) * v;
    scores.push_back(e);
  }
  double auc = roc_auc(scores, gen.merged.labels).auc;
  CHECK(auc > 0.45);
  CHECK(auc < 0.55);
}

TEST_CASE("default injections are detectable by matched correlation") {
  SynthConfig cfg;
  cfg.count_background = 500;
  cfg.count_bbh = 500;
  cfg.count_sglf = 500;
  cfg.seed = 91;
  auto gen = generate_synthetic(cfg);

  int wins = 0, total = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    // clean template from the same derived parameter stream
    Rng rb(derive_seed(cfg.seed, "synth.bbh", i));
    auto tb = render_bbh(cfg, draw_bbh_params(rb, cfg));
    Rng rs(derive_seed(cfg.seed, "synth.sglf", i));
    auto ts = render_sglf(cfg, draw_sglf_params(rs, cfg));

    const auto& background = gen.merged.samples[i];
    const auto& bbh = gen.merged.samples[500 + i];
    const auto& sglf = gen.merged.samples[1000 + i];

    auto corr = [](const SignalSample& a, const SignalSample& b) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kSampleSize; ++j)
        acc += static_cast<double>(a.values[j]) * b.values[j];
      return acc;
    };
    wins += corr(tb, bbh) > corr(tb, background);
    wins += corr(ts, sglf) > corr(ts, background);
    total += 2;
  }
  CHECK(static_cast<double>(wins) / total >= 0.99);
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.bbh_f_end_hz = 5000.0f;  // above nyquist at 4096 Hz
  CHECK_THROWS_AS(validate(cfg), ConfigError);

  cfg = SynthConfig{};
  cfg.sglf_f_min_hz = 200.0f;
  cfg.sglf_f_max_hz = 100.0f;
  CHECK_THROWS_AS(validate(cfg), ConfigError);

  cfg = SynthConfig{};
  cfg.bbh_amp_min = 2.0f;
  cfg.bbh_amp_max = 1.0f;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("split fractions with flooring") {
  SynthConfig cfg;
  cfg.count_background = 50;
  cfg.count_bbh = 25;
  cfg.count_sglf = 25;
  cfg.seed = 13;
  auto ds = generate_synthetic(cfg).merged;

  auto parts = split(ds, SplitSpec{0.7, 0.1, 0.2, 99});
  CHECK(parts.train.size() == 70);
  CHECK(parts.val.size() == 10);
  CHECK(parts.test.size() == 20);

  // disjoint cover: multiset of digests matches the input
  std::multiset<std::uint64_t> all, orig;
  for (const auto& s : ds.samples) orig.insert(sample_digest(s));
  for (const auto* p : {&parts.train, &parts.val, &parts.test})
    for (const auto& s : p->samples) all.insert(sample_digest(s));
  CHECK(all == orig);

  // stratified: class ratio preserved in every part
  for (const auto* p : {&parts.train, &parts.val, &parts.test}) {
    std::size_t neg = 0;
    for (auto l : p->labels) neg += l == 0;
    CHECK(neg * 2 == p->size());  // half background everywhere
  }

  // identical seed, identical split
  auto again = split(ds, SplitSpec{0.7, 0.1, 0.2, 99});
  REQUIRE(again.train.size() == parts.train.size());
  for (std::size_t i = 0; i < parts.train.size(); ++i)
    CHECK(sample_digest(again.train.samples[i]) ==
          sample_digest(parts.train.samples[i]));

  CHECK_THROWS_AS(split(ds, SplitSpec{0.8, 0.1, 0.2, 99}), ConfigError);
}

TEST_CASE("ten samples split 7/1/2") {
  SynthConfig cfg;
  cfg.count_background = 10;
  cfg.count_bbh = 0;
  cfg.count_sglf = 0;
  cfg.seed = 3;
  auto ds = generate_synthetic(cfg).merged;
  auto parts = split(ds, SplitSpec{});
  CHECK(parts.train.size() == 7);
  CHECK(parts.val.size() == 1);
  CHECK(parts.test.size() == 2);
}

TEST_CASE("epoch batches partition the index set") {
  auto batches = epoch_batches(1000, 512, 42);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].size() == 512);
  CHECK(batches[1].size() == 488);

  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  CHECK(seen.size() == 1000);

  // different epoch seed: different order, same index set
  auto other = epoch_batches(1000, 512, 43);
  CHECK(other[0] != batches[0]);
  std::set<std::size_t> seen2;
  for (const auto& b : other) seen2.insert(b.begin(), b.end());
  CHECK(seen2 == seen);

  auto singles = epoch_batches(5, 1, 7);
  CHECK(singles.size() == 5);
}
