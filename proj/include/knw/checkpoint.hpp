#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "knw/errors.hpp"
#include "knw/models.hpp"

namespace knw {

// Binary checkpoint layout, little-endian throughout:
//   8 bytes   magic "KNWCKPT1"
//   u32       format version (currently 1)
//   u8        architecture tag (1 = multihead, 2 = deeponet)
//   ...       architecture descriptor (see below)
//   u64       parameter count
//   f64[]     parameter values in layout order
//   u64       FNV-1a checksum of all preceding bytes
//
// Network descriptor: u32 input_dim, u32 width, u32 depth, u32 output_dim,
// u8 activation, f64 first_layer_scale. The multihead form stores one
// descriptor plus u32 n_tasks; the deeponet form stores branch and trunk
// descriptors plus f64 input_scale.

namespace detail {

constexpr char ckpt_magic[8] = {'K', 'N', 'W', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t ckpt_version = 1;

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct ByteWriter {
  std::string out;
  void raw(const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
};

struct ByteReader {
  const std::string& in;
  std::size_t pos = 0;
  void raw(void* p, std::size_t n) {
    if (pos + n > in.size()) throw FormatError("checkpoint truncated");
    std::memcpy(p, in.data() + pos, n);
    pos += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  double f64() {
    double v;
    raw(&v, 8);
    return v;
  }
};

inline void write_spec(ByteWriter& w, const MLPSpec& s) {
  w.u32(static_cast<std::uint32_t>(s.input_dim));
  w.u32(static_cast<std::uint32_t>(s.width));
  w.u32(static_cast<std::uint32_t>(s.depth));
  w.u32(static_cast<std::uint32_t>(s.output_dim));
  w.u8(static_cast<std::uint8_t>(s.activation));
  w.f64(s.first_layer_scale);
}

inline MLPSpec read_spec(ByteReader& r) {
  MLPSpec s;
  s.input_dim = r.u32();
  s.width = r.u32();
  s.depth = r.u32();
  s.output_dim = r.u32();
  std::uint8_t act = r.u8();
  if (act > 1) throw FormatError("checkpoint: unknown activation tag");
  s.activation = static_cast<Activation>(act);
  s.first_layer_scale = r.f64();
  return s;
}

inline void write_file(const std::string& path, const std::string& body) {
  std::string full = body;
  std::uint64_t sum = fnv1a(body);
  full.append(reinterpret_cast<const char*>(&sum), 8);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(full.data(), static_cast<std::streamsize>(full.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_file_checked(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + 4 + 8) throw FormatError("checkpoint truncated");
  std::string body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (fnv1a(body) != stored) throw FormatError("checkpoint checksum mismatch");
  if (std::memcmp(body.data(), ckpt_magic, 8) != 0)
    throw FormatError("checkpoint: bad magic");
  return body;
}

inline void write_params(ByteWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}

inline std::vector<double> read_params(ByteReader& r, std::size_t expect) {
  std::uint64_t n = r.u64();
  if (n != expect) throw FormatError("checkpoint: parameter count mismatch");
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return v;
}

}  // namespace detail

inline void save_checkpoint(const MhPinnModel& m, const std::string& path) {
  detail::ByteWriter w;
  w.raw(detail::ckpt_magic, 8);
  w.u32(detail::ckpt_version);
  w.u8(1);
  detail::write_spec(w, m.body);
  w.u32(static_cast<std::uint32_t>(m.n_tasks));
  detail::write_params(w, m.params.values);
  detail::write_file(path, w.out);
}

inline void save_checkpoint(const PiDonModel& m, const std::string& path) {
  detail::ByteWriter w;
  w.raw(detail::ckpt_magic, 8);
  w.u32(detail::ckpt_version);
  w.u8(2);
  detail::write_spec(w, m.branch);
  detail::write_spec(w, m.trunk);
  w.f64(m.input_scale);
  detail::write_params(w, m.params.values);
  detail::write_file(path, w.out);
}

using AnyModel = std::variant<MhPinnModel, PiDonModel>;

inline AnyModel load_checkpoint(const std::string& path) {
  std::string body = detail::read_file_checked(path);
  detail::ByteReader r{body, 8};
  std::uint32_t version = r.u32();
  if (version != detail::ckpt_version)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  std::uint8_t tag = r.u8();
  if (tag == 1) {
    MLPSpec body_spec = detail::read_spec(r);
    std::uint32_t n_tasks = r.u32();
    MhPinnModel m;
    m.body = body_spec;
    m.n_tasks = n_tasks;
    mlp_add_layout(body_spec, m.params, "body");
    m.params.add_block("heads", n_tasks, body_spec.n_basis());
    m.params.values = detail::read_params(r, m.params.size());
    return m;
  }
  if (tag == 2) {
    MLPSpec branch = detail::read_spec(r);
    MLPSpec trunk = detail::read_spec(r);
    double input_scale = r.f64();
    PiDonModel m;
    m.branch = branch;
    m.trunk = trunk;
    m.input_scale = input_scale;
    mlp_add_layout(branch, m.params, "branch");
    mlp_add_layout(trunk, m.params, "trunk");
    m.params.values = detail::read_params(r, m.params.size());
    return m;
  }
  throw FormatError("checkpoint: unknown architecture tag");
}

// Loads a checkpoint that must contain the given architecture.
inline MhPinnModel load_mh_pinn(const std::string& path) {
  AnyModel any = load_checkpoint(path);
  if (auto* m = std::get_if<MhPinnModel>(&any)) return std::move(*m);
  throw ArchitectureMismatch("checkpoint does not hold a multihead model: " + path);
}

inline PiDonModel load_pidon(const std::string& path) {
  AnyModel any = load_checkpoint(path);
  if (auto* m = std::get_if<PiDonModel>(&any)) return std::move(*m);
  throw ArchitectureMismatch("checkpoint does not hold a deeponet model: " + path);
}

}  // namespace knw
