#include "gwad/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <set>

namespace gwad {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Cursor {
  const unsigned char* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (left < n)
      throw CorruptCheckpointError("checkpoint: unexpected end of file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p;
    ++p;
    --left;
    return v;
  }
  const unsigned char* bytes(std::size_t n) {
    need(n);
    const unsigned char* q = p;
    p += n;
    left -= n;
    return q;
  }
};

std::uint32_t f32_bits(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  return bits;
}

float bits_f32(std::uint32_t bits) {
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void Checkpoint::add(std::string name, std::vector<std::uint64_t> dims,
                     std::vector<float> values) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != values.size())
    throw ShapeError("checkpoint: dims do not match value count for " + name);
  entries.push_back({std::move(name), std::move(dims), std::move(values)});
}

void write_checkpoint_file(const std::filesystem::path& path,
                           const Checkpoint& ckpt) {
  std::string buf;
  buf += "GWCK";
  put_u16(buf, 1);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.entries.size()));

  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& e : ckpt.entries) {
    put_u16(buf, static_cast<std::uint16_t>(e.name.size()));
    buf += e.name;
    buf.push_back(static_cast<char>(e.dims.size()));
    for (auto d : e.dims) put_u64(buf, d);
    std::string payload;
    payload.reserve(e.values.size() * 4);
    for (float v : e.values) put_u32(payload, f32_bits(v));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
                static_cast<uInt>(payload.size()));
    buf += payload;
  }
  put_u32(buf, static_cast<std::uint32_t>(crc));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw FormatError("short write to " + path.string());
}

Checkpoint read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Cursor c{reinterpret_cast<const unsigned char*>(buf.data()), buf.size()};
  if (buf.size() < 4 || std::memcmp(buf.data(), "GWCK", 4) != 0)
    throw FormatError("checkpoint: bad magic");
  c.bytes(4);
  if (c.u16() != 1) throw FormatError("checkpoint: unsupported version");

  std::uint32_t count = c.u32();
  Checkpoint ckpt;
  std::set<std::string> seen;
  uLong crc = crc32(0L, Z_NULL, 0);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    std::uint16_t name_len = c.u16();
    const unsigned char* nb = c.bytes(name_len);
    e.name.assign(reinterpret_cast<const char*>(nb), name_len);
    if (!seen.insert(e.name).second)
      throw CorruptCheckpointError("checkpoint: duplicate entry " + e.name);
    std::uint8_t rank = c.u8();
    std::uint64_t n = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      e.dims.push_back(c.u64());
      n *= e.dims.back();
    }
    const unsigned char* pb = c.bytes(static_cast<std::size_t>(n) * 4);
    crc = crc32(crc, pb, static_cast<uInt>(n * 4));
    e.values.resize(static_cast<std::size_t>(n));
    for (std::uint64_t j = 0; j < n; ++j) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(pb[j * 4 + b]) << (8 * b);
      e.values[j] = bits_f32(bits);
    }
    ckpt.entries.push_back(std::move(e));
  }
  std::uint32_t stored_crc = c.u32();
  if (stored_crc != static_cast<std::uint32_t>(crc))
    throw CorruptCheckpointError("checkpoint: CRC mismatch");
  if (c.left != 0)
    throw CorruptCheckpointError("checkpoint: trailing bytes after CRC");
  return ckpt;
}

// ---- Model <-> checkpoint ----------------------------------------------------

namespace {

std::vector<float> seed_limbs(std::uint64_t seed) {
  std::vector<float> limbs(4);
  for (int i = 0; i < 4; ++i)
    limbs[i] = static_cast<float>((seed >> (16 * i)) & 0xffff);
  return limbs;
}

std::uint64_t seed_from_limbs(const std::vector<float>& limbs) {
  std::uint64_t seed = 0;
  for (int i = 0; i < 4 && i < static_cast<int>(limbs.size()); ++i)
    seed |= static_cast<std::uint64_t>(limbs[static_cast<std::size_t>(i)]) << (16 * i);
  return seed;
}

const CheckpointEntry& require(const Checkpoint& ckpt, const std::string& name) {
  const CheckpointEntry* e = ckpt.find(name);
  if (!e) throw CorruptCheckpointError("checkpoint: missing entry " + name);
  return *e;
}

}  // namespace

template <typename T>
Checkpoint make_checkpoint(Model<T>& model, const NAdam<T>* optimizer,
                           int epoch, double best_val_loss) {
  Checkpoint ckpt;
  const ModelConfig& c = model.config();

  ckpt.add("config.input", {2},
           {static_cast<float>(c.input_len), static_cast<float>(c.input_channels)});
  ckpt.add("config.stem", {3},
           {static_cast<float>(c.stem_channels), static_cast<float>(c.stem_kernel),
            static_cast<float>(c.stem_pool)});
  std::vector<float> blocks;
  for (const auto& b : c.blocks) {
    blocks.push_back(static_cast<float>(b.channels));
    blocks.push_back(static_cast<float>(b.kernel));
    blocks.push_back(static_cast<float>(b.stride));
  }
  ckpt.add("config.blocks", {c.blocks.size(), 3}, std::move(blocks));
  if (c.head_hidden)
    ckpt.add_scalar("config.head_hidden", static_cast<float>(*c.head_hidden));
  ckpt.add("config.flags", {3},
           {static_cast<float>(c.num_classes), c.post_block_relu ? 1.f : 0.f,
            c.standardize_inputs ? 1.f : 0.f});
  ckpt.add("config.seed", {4}, seed_limbs(c.seed));
  ckpt.add_scalar("meta.epoch", static_cast<float>(epoch));
  ckpt.add_scalar("meta.best_val_loss", static_cast<float>(best_val_loss));

  for (auto& [name, p] : model.parameters()) {
    std::vector<std::uint64_t> dims(p->shape().begin(), p->shape().end());
    std::vector<float> values(p->data().begin(), p->data().end());
    ckpt.add(name, std::move(dims), std::move(values));
  }
  for (auto& [name, b] : model.buffers())
    ckpt.add(name, {b->size()}, std::vector<float>(b->begin(), b->end()));

  if (optimizer) {
    ckpt.add_scalar("optim.t", static_cast<float>(optimizer->step_count()));
    ckpt.add_scalar("optim.lr", static_cast<float>(optimizer->lr()));
    for (const auto& [name, slot] : optimizer->slots()) {
      ckpt.add("optim.m." + name, {slot.m.size()},
               std::vector<float>(slot.m.begin(), slot.m.end()));
      ckpt.add("optim.v." + name, {slot.v.size()},
               std::vector<float>(slot.v.begin(), slot.v.end()));
    }
  }
  return ckpt;
}

ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig c;
  const auto& input = require(ckpt, "config.input");
  if (input.values.size() != 2)
    throw CorruptCheckpointError("checkpoint: malformed config.input");
  c.input_len = static_cast<int>(input.values[0]);
  c.input_channels = static_cast<int>(input.values[1]);

  const auto& stem = require(ckpt, "config.stem");
  if (stem.values.size() != 3)
    throw CorruptCheckpointError("checkpoint: malformed config.stem");
  c.stem_channels = static_cast<int>(stem.values[0]);
  c.stem_kernel = static_cast<int>(stem.values[1]);
  c.stem_pool = static_cast<int>(stem.values[2]);

  const auto& blocks = require(ckpt, "config.blocks");
  if (blocks.dims.size() != 2 || blocks.dims[1] != 3)
    throw CorruptCheckpointError("checkpoint: malformed config.blocks");
  c.blocks.clear();
  for (std::size_t i = 0; i < blocks.dims[0]; ++i)
    c.blocks.push_back({static_cast<int>(blocks.values[i * 3]),
                        static_cast<int>(blocks.values[i * 3 + 1]),
                        static_cast<int>(blocks.values[i * 3 + 2])});

  if (const auto* hh = ckpt.find("config.head_hidden"))
    c.head_hidden = static_cast<int>(hh->values.at(0));

  const auto& flags = require(ckpt, "config.flags");
  if (flags.values.size() != 3)
    throw CorruptCheckpointError("checkpoint: malformed config.flags");
  c.num_classes = static_cast<int>(flags.values[0]);
  c.post_block_relu = flags.values[1] != 0.f;
  c.standardize_inputs = flags.values[2] != 0.f;

  c.seed = seed_from_limbs(require(ckpt, "config.seed").values);
  return c;
}

namespace {

void copy_arrays_into(const Checkpoint& ckpt, Model<float>& model,
                      std::set<std::string>* consumed) {
  for (auto& [name, p] : model.parameters()) {
    const auto& e = require(ckpt, name);
    if (e.values.size() != p->numel())
      throw CorruptCheckpointError("checkpoint: size mismatch for " + name);
    std::copy(e.values.begin(), e.values.end(), p->data().begin());
    if (consumed) consumed->insert(name);
  }
  for (auto& [name, b] : model.buffers()) {
    const auto& e = require(ckpt, name);
    if (e.values.size() != b->size())
      throw CorruptCheckpointError("checkpoint: size mismatch for " + name);
    std::copy(e.values.begin(), e.values.end(), b->begin());
    if (consumed) consumed->insert(name);
  }
}

}  // namespace

LoadedModel model_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig config = config_from_checkpoint(ckpt);
  LoadedModel loaded{Model<float>(config)};

  std::set<std::string> consumed = {"config.input",  "config.stem",
                                    "config.blocks", "config.flags",
                                    "config.seed",   "meta.epoch",
                                    "meta.best_val_loss"};
  if (ckpt.find("config.head_hidden")) consumed.insert("config.head_hidden");

  copy_arrays_into(ckpt, loaded.model, &consumed);
  loaded.epoch = static_cast<int>(require(ckpt, "meta.epoch").values.at(0));
  loaded.best_val_loss = require(ckpt, "meta.best_val_loss").values.at(0);

  if (ckpt.find("optim.t")) {
    loaded.has_optimizer = true;
    consumed.insert("optim.t");
    consumed.insert("optim.lr");
    std::map<std::string, NAdam<float>::Slot> slots;
    for (auto& [name, p] : loaded.model.parameters()) {
      const auto& m = require(ckpt, "optim.m." + name);
      const auto& v = require(ckpt, "optim.v." + name);
      slots[name] = {std::vector<float>(m.values.begin(), m.values.end()),
                     std::vector<float>(v.values.begin(), v.values.end())};
      consumed.insert("optim.m." + name);
      consumed.insert("optim.v." + name);
    }
    loaded.optimizer.restore(
        static_cast<std::int64_t>(require(ckpt, "optim.t").values.at(0)),
        require(ckpt, "optim.lr").values.at(0), std::move(slots));
  }

  for (const auto& e : ckpt.entries)
    if (!consumed.count(e.name))
      throw CorruptCheckpointError("checkpoint: unexpected entry " + e.name);
  return loaded;
}

void load_into_model(const Checkpoint& ckpt, Model<float>& model) {
  if (config_from_checkpoint(ckpt) != model.config())
    throw ConfigError("checkpoint: stored config differs from the model's");
  copy_arrays_into(ckpt, model, nullptr);
}

template Checkpoint make_checkpoint<float>(Model<float>&, const NAdam<float>*,
                                           int, double);
template Checkpoint make_checkpoint<double>(Model<double>&,
                                            const NAdam<double>*, int, double);

}  // namespace gwad
