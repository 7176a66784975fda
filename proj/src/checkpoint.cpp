#include "metasgd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <vector>

namespace metasgd {

namespace {

constexpr char kMagic[8] = {'M', 'S', 'G', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw IoError("checkpoint: truncated file");
  }
  std::uint64_t take(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += n;
    return v;
  }
  std::string take_str(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& arrays) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  if (arrays.size() > 0xffffffffu) throw IoError("checkpoint: too many arrays");
  put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, t] : arrays.items) {
    if (name.size() > 0xffffu) throw IoError("checkpoint: array name too long: " + name);
    if (t.rank() > 0xffu) throw IoError("checkpoint: rank too large for '" + name + "'");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.dims()) put_u64(out, d);
    for (double v : t.data()) put_f64(out, v);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot open '" + tmp + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("checkpoint: cannot rename '" + tmp + "' to '" + path + "'");
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{buf};
  const std::string magic = r.take_str(sizeof(kMagic));
  if (magic != std::string(kMagic, sizeof(kMagic)))
    throw IoError("checkpoint: bad magic or version in '" + path + "'");
  const std::uint64_t version = r.take(4);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t count = r.take(4);

  ParamSet out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.take(2);
    const std::string name = r.take_str(name_len);
    const std::uint64_t rank = r.take(1);
    if (rank > 8) throw IoError("checkpoint: implausible rank for '" + name + "'");
    std::vector<std::size_t> dims(rank);
    std::uint64_t numel = 1;
    for (auto& d : dims) {
      d = r.take(8);
      if (d == 0 || d > (1u << 26) || numel > (1u << 27))
        throw IoError("checkpoint: implausible dims for '" + name + "'");
      numel *= d;
    }
    std::vector<double> values(numel);
    for (auto& v : values) v = std::bit_cast<double>(r.take(8));
    out.add(name, Tensor::from_flat(std::move(dims), std::move(values)));
  }
  if (r.pos != buf.size()) throw IoError("checkpoint: trailing bytes in '" + path + "'");
  return out;
}

}  // namespace metasgd
