#include "trireid/sgt1.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "trireid/error.hpp"

namespace trireid {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'T', '1'};
constexpr int kMaxRank = 8;
constexpr uint64_t kMaxElems = uint64_t(1) << 31;

void put_u32_le(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& buf, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(buf, bits);
}

[[noreturn]] void fail(const std::string& path, size_t offset, const std::string& what) {
  throw FormatError(path + " @ byte " + std::to_string(offset) + ": " + what);
}

}  // namespace

void write_sgt1(const std::string& path, const Tensor& t) {
  std::string buf;
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(t.rank()));
  for (int d : t.shape()) put_u32_le(buf, static_cast<uint32_t>(d));
  for (double v : t.data()) put_f32_le(buf, static_cast<float>(v));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

Tensor read_sgt1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t at = 0;
  auto need = [&](size_t n, const char* what) {
    if (buf.size() - at < n) fail(path, at, std::string("truncated ") + what);
  };
  auto get_u32_le = [&](size_t pos) {
    return static_cast<uint32_t>(static_cast<uint8_t>(buf[pos])) |
           static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + 1])) << 8 |
           static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + 2])) << 16 |
           static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + 3])) << 24;
  };
  need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) fail(path, 0, "bad magic");
  at = 4;
  need(1, "rank");
  int rank = static_cast<unsigned char>(buf[at]);
  at += 1;
  if (rank < 1 || rank > kMaxRank) fail(path, 4, "unsupported rank " + std::to_string(rank));
  std::vector<int> shape(rank);
  uint64_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    need(4, "dims");
    uint32_t d = get_u32_le(at);
    at += 4;
    if (d == 0) fail(path, at - 4, "zero dim");
    numel *= d;
    if (numel > kMaxElems) fail(path, at - 4, "dim overflow");
    shape[i] = static_cast<int>(d);
  }
  need(numel * 4, "payload");
  std::vector<double> values(numel);
  for (uint64_t i = 0; i < numel; ++i) {
    uint32_t bits = get_u32_le(at);
    at += 4;
    float f;
    std::memcpy(&f, &bits, 4);
    values[i] = static_cast<double>(f);
  }
  if (at != buf.size()) fail(path, at, "trailing bytes");
  return Tensor::from_data(std::move(shape), std::move(values));
}

}  // namespace trireid
