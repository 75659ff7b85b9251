#include "onetracker/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace onetracker {

namespace {

constexpr char kMagic[4] = {'O', 'T', 'K', 'R'};
constexpr uint32_t kVersion = 1;

struct CrcWriter {
  std::ostream& out;
  uint32_t crc = static_cast<uint32_t>(crc32(0L, Z_NULL, 0));

  void write(const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    crc = static_cast<uint32_t>(
        crc32(crc, static_cast<const Bytef*>(p), static_cast<uInt>(n)));
  }
  void u8(uint8_t v) { write(&v, 1); }
  void u32(uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    write(b, 4);
  }
  void f32(float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void f64(double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(u >> (8 * i));
    write(b, 8);
  }
};

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) {
    if (pos + n > buf.size()) throw ValidationError("checkpoint: truncated file");
  }
  const uint8_t* take(size_t n) {
    need(n);
    const uint8_t* p = buf.data() + pos;
    pos += n;
    return p;
  }
  uint8_t u8() { return *take(1); }
  uint32_t u32() {
    const uint8_t* b = take(4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }
  float f32() {
    uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double f64() {
    const uint8_t* b = take(8);
    uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
};

struct CountingBuf : std::streambuf {
  uint64_t bytes = 0;
  std::streamsize xsputn(const char*, std::streamsize n) override {
    bytes += static_cast<uint64_t>(n);
    return n;
  }
  int overflow(int c) override {
    ++bytes;
    return c;
  }
};

}  // namespace

void Checkpoint::add(const std::string& name, const Tensor& t, Dtype dtype) {
  if (name.empty()) throw ValidationError("checkpoint: entry name must not be empty");
  CheckpointEntry e;
  e.name = name;
  e.dtype = dtype;
  e.shape = t.shape();
  e.data.assign(t.data().begin(), t.data().end());
  if (dtype == Dtype::F32) {
    for (double& v : e.data) v = static_cast<double>(static_cast<float>(v));
  }
  auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                             [](const CheckpointEntry& a, const std::string& n) { return a.name < n; });
  if (it != entries_.end() && it->name == name) {
    throw ValidationError("checkpoint: duplicate entry '" + name + "'");
  }
  entries_.insert(it, std::move(e));
}

void Checkpoint::add_scalar(const std::string& name, double value, Dtype dtype) {
  add(name, Tensor({1}, {value}), dtype);
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), name,
                             [](const CheckpointEntry& a, const std::string& n) { return a.name < n; });
  if (it == entries_.end() || it->name != name) return nullptr;
  return &*it;
}

void save_checkpoint(const Checkpoint& ck, std::ostream& out) {
  CrcWriter w{out};
  w.write(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(ck.entries().size()));
  for (const CheckpointEntry& e : ck.entries()) {
    w.u32(static_cast<uint32_t>(e.name.size()));
    w.write(e.name.data(), e.name.size());
    w.u8(static_cast<uint8_t>(e.dtype));
    w.u32(static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) w.u32(static_cast<uint32_t>(d));
    if (e.dtype == Dtype::F32) {
      for (double v : e.data) w.f32(static_cast<float>(v));
    } else {
      for (double v : e.data) w.f64(v);
    }
  }
  const uint32_t crc = w.crc;  // trailing CRC is not part of its own coverage
  uint8_t b[4] = {static_cast<uint8_t>(crc), static_cast<uint8_t>(crc >> 8),
                  static_cast<uint8_t>(crc >> 16), static_cast<uint8_t>(crc >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

void save_checkpoint_file(const Checkpoint& ck, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  save_checkpoint(ck, f);
  f.flush();
  if (!f) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(std::istream& in) {
  std::vector<uint8_t> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (buf.size() < 16) throw ValidationError("checkpoint: file too short");
  const size_t body = buf.size() - 4;
  uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(buf[body + static_cast<size_t>(i)]) << (8 * i);
  uint32_t actual = static_cast<uint32_t>(crc32(0L, Z_NULL, 0));
  actual = static_cast<uint32_t>(crc32(actual, buf.data(), static_cast<uInt>(body)));
  if (stored != actual) {
    std::ostringstream os;
    os << "checkpoint: CRC mismatch (stored " << stored << ", computed " << actual << ")";
    throw ValidationError(os.str());
  }
  std::vector<uint8_t> bytes(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(body));
  Reader r{bytes};
  if (std::memcmp(r.take(4), kMagic, 4) != 0) {
    throw ValidationError("checkpoint: bad magic (expected OTKR)");
  }
  const uint32_t version = r.u32();
  if (version != kVersion) {
    throw ValidationError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const uint32_t count = r.u32();
  Checkpoint ck;
  std::string prev;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    const uint8_t* np = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(np), name_len);
    if (i > 0 && !(prev < name)) {
      throw ValidationError("checkpoint: entries not sorted by name at '" + name + "'");
    }
    prev = name;
    const uint8_t tag = r.u8();
    if (tag > 1) throw ValidationError("checkpoint: unknown dtype tag for '" + name + "'");
    const Dtype dtype = static_cast<Dtype>(tag);
    const uint32_t rank = r.u32();
    Shape shape(rank);
    int64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int64_t>(r.u32());
      n *= shape[d];
    }
    std::vector<double> data(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) {
      data[static_cast<size_t>(k)] = dtype == Dtype::F32 ? static_cast<double>(r.f32()) : r.f64();
    }
    ck.add(name, Tensor(shape, std::move(data)), Dtype::F64);
    // reinstate the true dtype tag (add() would re-round, which f32 data survives)
    const_cast<CheckpointEntry*>(ck.find(name))->dtype = dtype;
  }
  if (r.pos != bytes.size()) throw ValidationError("checkpoint: trailing bytes after last entry");
  return ck;
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("checkpoint: cannot open '" + path + "'");
  return load_checkpoint(f);
}

uint64_t checkpoint_byte_size(const Checkpoint& ck) {
  CountingBuf buf;
  std::ostream os(&buf);
  save_checkpoint(ck, os);
  return buf.bytes;
}

uint32_t checkpoint_stored_crc(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("checkpoint: cannot open '" + path + "'");
  f.seekg(-4, std::ios::end);
  uint8_t b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) throw ValidationError("checkpoint: cannot read trailing CRC of '" + path + "'");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

Checkpoint snapshot_parameters(const std::vector<Parameter*>& params, Dtype dtype) {
  Checkpoint ck;
  for (const Parameter* p : params) ck.add(p->name, p->tensor, dtype);
  return ck;
}

Checkpoint snapshot_trainable(const std::vector<Parameter*>& params, Dtype dtype) {
  Checkpoint ck;
  for (const Parameter* p : params)
    if (!p->frozen) ck.add(p->name, p->tensor, dtype);
  return ck;
}

void load_into(const std::vector<Parameter*>& params, const Checkpoint& ck, bool trainable_only) {
  size_t consumed = 0;
  for (Parameter* p : params) {
    if (trainable_only && p->frozen) continue;
    const CheckpointEntry* e = ck.find(p->name);
    if (!e) throw ValidationError("checkpoint is missing parameter '" + p->name + "'");
    if (e->shape != p->tensor.shape()) {
      throw ValidationError("checkpoint entry '" + p->name + "' has shape " + shape_str(e->shape) +
                            " but the model expects " + shape_str(p->tensor.shape()));
    }
    auto dst = p->tensor.data_mut();
    std::copy(e->data.begin(), e->data.end(), dst.begin());
    ++consumed;
  }
  size_t non_meta = 0;
  for (const CheckpointEntry& e : ck.entries()) {
    if (e.name.rfind("meta.", 0) == 0) continue;
    ++non_meta;
    bool known = false;
    for (const Parameter* p : params) {
      if (p->name == e.name) {
        known = true;
        break;
      }
    }
    if (!known) throw ValidationError("checkpoint entry '" + e.name + "' matches no model parameter");
  }
  if (non_meta != consumed) {
    throw ValidationError("checkpoint covers " + std::to_string(non_meta) +
                          " parameters but the model consumed " + std::to_string(consumed));
  }
}

}  // namespace onetracker
