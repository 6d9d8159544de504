#include "ordlab/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ordlab/rng.hpp"

namespace ordlab {

namespace {

constexpr char kMagic[8] = {'O', 'R', 'D', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void flag(bool b) { buf_.push_back(b ? 1 : 0); }
  void f64_array(std::span<const double> a) {
    u64(a.size());
    for (double v : a) f64(v);
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : buf_(std::move(bytes)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  bool flag() {
    need(1);
    return buf_[pos_++] != 0;
  }
  void f64_array(std::span<double> out) {
    const std::uint64_t n = u64();
    if (n != out.size()) throw std::runtime_error("checkpoint: array size mismatch");
    for (auto& v : out) v = f64();
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_param_vector(Writer& w, const ParameterVector& pv) { w.f64_array(pv.flat()); }

ParameterVector read_param_vector(Reader& r, const RegistryPtr& reg) {
  ParameterVector pv(reg);
  r.f64_array(pv.flat());
  return pv;
}

void write_optional_pv(Writer& w, bool has, const ParameterVector& pv) {
  w.flag(has);
  if (has) write_param_vector(w, pv);
}

void write_set(Writer& w, const std::set<std::uint32_t>& s) {
  w.u64(s.size());
  for (auto v : s) w.u32(v);
}

std::set<std::uint32_t> read_set(Reader& r) {
  const std::uint64_t n = r.u64();
  std::set<std::uint32_t> s;
  for (std::uint64_t i = 0; i < n; ++i) s.insert(r.u32());
  return s;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  const std::size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) throw std::runtime_error("checkpoint read failed: " + path.string());
  return bytes;
}

Reader open_verified(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (checksum(bytes.data() + 8, body - 8) != stored)
    throw std::runtime_error("checkpoint checksum failure: " + path.string());
  std::vector<unsigned char> payload(bytes.begin() + 8, bytes.begin() + body);
  return Reader(std::move(payload));
}

}  // namespace

void save_checkpoint(const CheckpointData& data, const std::filesystem::path& path) {
  Writer w;
  w.u64(data.epoch);
  w.u64(data.theta.size());
  write_param_vector(w, data.theta);
  w.u64(data.opt.t);
  write_param_vector(w, data.opt.m);
  write_param_vector(w, data.opt.v);

  const auto& h = data.hooks;
  write_optional_pv(w, h.has_prev_grad, h.prev_grad);
  w.flag(h.path_initialized);
  if (h.path_initialized) {
    write_param_vector(w, h.path_origin);
    write_param_vector(w, h.path_prev);
    w.f64(h.path_length);
  }
  write_optional_pv(w, h.has_prev_theta, h.prev_theta);

  w.u64(h.window.capacity());
  w.u64(h.window.size());
  for (const auto& e : h.window.entries()) {
    w.u64(e.step);
    w.u64(e.g.size());
    for (float v : e.g) w.f32(v);
  }

  write_set(w, h.embed_ever);
  write_set(w, h.decoder_ever);
  write_optional_pv(w, h.has_prev_e, h.prev_e);

  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path.string());
  bool ok = std::fwrite(kMagic, 1, 8, f) == 8;
  ok = ok && std::fwrite(w.bytes().data(), 1, w.bytes().size(), f) == w.bytes().size();
  const std::uint64_t sum = checksum(w.bytes().data(), w.bytes().size());
  unsigned char trailer[8];
  for (int i = 0; i < 8; ++i) trailer[i] = static_cast<unsigned char>(sum >> (8 * i));
  ok = ok && std::fwrite(trailer, 1, 8, f) == 8;
  std::fclose(f);
  if (!ok) throw std::runtime_error("checkpoint write failed: " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path, const RegistryPtr& reg) {
  Reader r = open_verified(path);
  CheckpointData data;
  data.epoch = r.u64();
  const std::uint64_t count = r.u64();
  if (count != reg->total_size())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
  data.theta = read_param_vector(r, reg);
  data.opt.t = r.u64();
  data.opt.m = read_param_vector(r, reg);
  data.opt.v = read_param_vector(r, reg);

  auto& h = data.hooks;
  h.has_prev_grad = r.flag();
  if (h.has_prev_grad) h.prev_grad = read_param_vector(r, reg);
  h.path_initialized = r.flag();
  if (h.path_initialized) {
    h.path_origin = read_param_vector(r, reg);
    h.path_prev = read_param_vector(r, reg);
    h.path_length = r.f64();
  }
  h.has_prev_theta = r.flag();
  if (h.has_prev_theta) h.prev_theta = read_param_vector(r, reg);

  const std::uint64_t capacity = r.u64();
  h.window = GradientWindow(capacity);
  const std::uint64_t n_entries = r.u64();
  for (std::uint64_t i = 0; i < n_entries; ++i) {
    GradientWindow::Entry e;
    e.step = r.u64();
    const std::uint64_t len = r.u64();
    e.g.resize(len);
    for (auto& v : e.g) v = r.f32();
    h.window.mutable_entries().push_back(std::move(e));
  }

  h.embed_ever = read_set(r);
  h.decoder_ever = read_set(r);
  h.has_prev_e = r.flag();
  if (h.has_prev_e) h.prev_e = read_param_vector(r, reg);
  return data;
}

ParameterVector load_checkpoint_params(const std::filesystem::path& path,
                                       const RegistryPtr& reg) {
  Reader r = open_verified(path);
  r.u64();  // epoch
  const std::uint64_t count = r.u64();
  if (count != reg->total_size())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path.string());
  return read_param_vector(r, reg);
}

}  // namespace ordlab
