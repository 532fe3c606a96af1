#include "sgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace sgen {
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { raw(v, 4); }
  void u64(std::uint64_t v) { raw(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;

 private:
  void raw(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) {
    if (b_.size() - pos_ < n)
      throw ParseError("checkpoint truncated: need " + std::to_string(n) + " more bytes", pos_);
  }
  std::uint64_t raw(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_set(Writer& w, const std::string& prefix, const ParamSet& set) {
  for (const auto& [path, t] : set) {
    const std::string full = prefix + path;
    w.u32(static_cast<std::uint32_t>(full.size()));
    w.bytes(full.data(), full.size());
    const Shape s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.numel(); ++i) w.f64(t[i]);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params, const SgenConfig& config) {
  config.validate();
  Writer w;
  w.bytes("SGEN", 4);
  w.u32(kCheckpointVersion);
  w.i32(config.levels);
  w.i32(config.base_channels);
  w.i32(static_cast<std::int32_t>(config.combiner));
  w.f64(config.lrelu_alpha);
  w.u64(config.seed);
  w.i32(config.image_channels);
  w.u32(static_cast<std::uint32_t>(config.disc_channels.size()));
  for (int c : config.disc_channels) w.i32(c);
  w.u32(static_cast<std::uint32_t>(params.generator.tensors.size() +
                                   params.discriminator.tensors.size()));
  write_set(w, "gen.", params.generator.tensors);
  write_set(w, "disc.", params.discriminator.tensors);
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != "SGEN") throw ParseError("bad magic (not an SGEN checkpoint)", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                         std::to_string(kCheckpointVersion) + ")",
                     4);
  Checkpoint ck;
  SgenConfig& cfg = ck.config;
  cfg.levels = r.i32();
  cfg.base_channels = r.i32();
  const std::int32_t comb = r.i32();
  if (comb < 0 || comb > 3) throw ParseError("bad combiner id " + std::to_string(comb), r.pos());
  cfg.combiner = static_cast<Combiner>(comb);
  cfg.lrelu_alpha = r.f64();
  cfg.seed = r.u64();
  cfg.image_channels = r.i32();
  const std::uint32_t ndisc = r.u32();
  if (ndisc > 64) throw ParseError("implausible discriminator depth", r.pos());
  cfg.disc_channels.assign(ndisc, 0);
  for (auto& c : cfg.disc_channels) c = r.i32();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid config block: ") + e.what(), r.pos());
  }

  // The expected table is fully determined by the config.
  ModelParams expected = init_params(cfg, 0);
  const std::uint32_t count = r.u32();
  const std::size_t want = expected.generator.tensors.size() + expected.discriminator.tensors.size();
  if (count != want)
    throw ParseError("shape table lists " + std::to_string(count) + " tensors, config implies " +
                         std::to_string(want),
                     r.pos());
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::uint32_t len = r.u32();
    if (len > 4096) throw ParseError("implausible tensor path length", at);
    const std::string full = r.str(len);
    ParamSet* set = nullptr;
    std::string path;
    if (full.rfind("gen.", 0) == 0) {
      set = &expected.generator.tensors;
      path = full.substr(4);
    } else if (full.rfind("disc.", 0) == 0) {
      set = &expected.discriminator.tensors;
      path = full.substr(5);
    }
    if (!set) throw ParseError("shape table names unknown tensor '" + full + "'", at);
    auto it = set->find(path);
    if (it == set->end()) throw ParseError("shape table names unknown tensor '" + full + "'", at);
    if (!seen.insert(full).second)
      throw ParseError("shape table lists '" + full + "' twice", at);
    Shape s;
    s.n = static_cast<int>(r.u32());
    s.c = static_cast<int>(r.u32());
    s.h = static_cast<int>(r.u32());
    s.w = static_cast<int>(r.u32());
    if (s != it->second.shape())
      throw ParseError("shape table mismatch for '" + full + "': stored " + s.str() +
                           ", config implies " + it->second.shape().str(),
                       at);
    Tensor& t = it->second;
    for (std::size_t k = 0; k < t.numel(); ++k) t[k] = r.f64();
  }
  if (!r.done()) throw ParseError("trailing bytes after tensor table", r.pos());
  ck.params = std::move(expected);
  return ck;
}

void save_checkpoint(const ModelParams& params, const SgenConfig& config,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params, config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace sgen
