#include "trireid/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "trireid/config.hpp"
#include "trireid/error.hpp"

namespace trireid::ckpt {
namespace {

constexpr char kMagic[4] = {'T', 'R', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(buf, bits);
}

void put_bytes(std::string& buf, const std::string& s) {
  put_u64(buf, s.size());
  buf.append(s);
}

struct Reader {
  std::string path;
  std::vector<char> buf;
  size_t at = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path + " @ byte " + std::to_string(at) + ": " + what);
  }
  void need(size_t n, const char* what) {
    if (buf.size() - at < n) fail(std::string("truncated ") + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[at + i])) << (8 * i);
    }
    at += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[at + i])) << (8 * i);
    }
    at += 8;
    return v;
  }
  double f64(const char* what) {
    uint64_t bits = u64(what);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }
  std::string bytes(const char* what) {
    uint64_t n = u64(what);
    need(n, what);
    std::string s(buf.data() + at, n);
    at += n;
    return s;
  }
};

Reader open_reader(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  Reader r;
  r.path = path;
  r.buf.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  r.need(4, "magic");
  if (std::memcmp(r.buf.data(), kMagic, 4) != 0) r.fail("bad magic");
  r.at = 4;
  uint32_t version = r.u32("version");
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  return r;
}

CheckpointMeta read_meta(Reader& r) {
  CheckpointMeta meta;
  meta.config_json = r.bytes("config");
  meta.d_raw = static_cast<int>(r.u32("d_raw"));
  meta.hp = static_cast<int>(r.u32("hp"));
  meta.wp = static_cast<int>(r.u32("wp"));
  meta.num_classes = static_cast<int>(r.u32("num_classes"));
  meta.epoch = static_cast<int>(r.u32("epoch"));
  meta.adam_steps = static_cast<int64_t>(r.u64("adam_steps"));
  meta.rng_state = r.bytes("rng_state");
  return meta;
}

void check_slots(const model::Model& m, const Adam& opt,
                 const std::vector<model::NamedParam>& params) {
  if (opt.slot_count() != params.size()) {
    throw ValueError("checkpoint: optimizer covers " + std::to_string(opt.slot_count()) +
                     " parameters, model has " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (opt.slot_param(i).id() != params[i].tensor.id()) {
      throw ValueError("checkpoint: optimizer slot order diverges from the parameter registry"
                       " at " + params[i].name);
    }
  }
  (void)m;
}

}  // namespace

void save_checkpoint(const std::string& path, const model::Model& m, const Adam& opt,
                     const Rng& rng, int epoch) {
  auto params = model::named_params(m);
  check_slots(m, opt, params);

  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_bytes(buf, run_config_json(m.cfg));
  put_u32(buf, static_cast<uint32_t>(m.d_raw));
  put_u32(buf, static_cast<uint32_t>(m.hp));
  put_u32(buf, static_cast<uint32_t>(m.wp));
  put_u32(buf, static_cast<uint32_t>(m.num_classes));
  put_u32(buf, static_cast<uint32_t>(epoch));
  put_u64(buf, static_cast<uint64_t>(opt.steps()));
  put_bytes(buf, rng.state());
  put_u32(buf, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    put_bytes(buf, p.name);
    buf.push_back(static_cast<char>(p.tensor.rank()));
    for (int d : p.tensor.shape()) put_u32(buf, static_cast<uint32_t>(d));
    for (double v : p.tensor.data()) put_f64(buf, v);
    for (double v : opt.slot_m(i)) put_f64(buf, v);
    for (double v : opt.slot_v(i)) put_f64(buf, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  Reader r = open_reader(path);
  return read_meta(r);
}

CheckpointMeta load_checkpoint(const std::string& path, const model::Model& m, Adam* opt,
                               Rng* rng) {
  Reader r = open_reader(path);
  CheckpointMeta meta = read_meta(r);

  if (meta.config_json != run_config_json(m.cfg)) {
    throw ValueError("checkpoint: config snapshot does not match the active config");
  }
  if (meta.d_raw != m.d_raw || meta.hp != m.hp || meta.wp != m.wp ||
      meta.num_classes != m.num_classes) {
    throw ValueError("checkpoint: data geometry does not match the model");
  }

  auto params = model::named_params(m);
  if (opt) check_slots(m, *opt, params);
  uint32_t count = r.u32("param_count");
  if (count != params.size()) {
    throw ValueError("checkpoint: holds " + std::to_string(count) + " parameters, model has " +
                     std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    std::string name = r.bytes("param name");
    if (name != p.name) {
      throw ValueError("checkpoint: parameter order mismatch, expected " + p.name + ", found " +
                       name);
    }
    r.need(1, "rank");
    int rank = static_cast<unsigned char>(r.buf[r.at]);
    r.at += 1;
    if (rank != p.tensor.rank()) throw ValueError("checkpoint: rank mismatch at " + name);
    for (int a = 0; a < rank; ++a) {
      if (static_cast<int>(r.u32("dims")) != p.tensor.dim(a)) {
        throw ValueError("checkpoint: shape mismatch at " + name);
      }
    }
    size_t n = p.tensor.numel();
    auto& dst = p.tensor.data();
    for (size_t e = 0; e < n; ++e) dst[e] = r.f64("values");
    if (opt) {
      auto& mm = opt->slot_m(i);
      auto& vv = opt->slot_v(i);
      mm.assign(n, 0.0);
      vv.assign(n, 0.0);
      for (size_t e = 0; e < n; ++e) mm[e] = r.f64("moment m");
      for (size_t e = 0; e < n; ++e) vv[e] = r.f64("moment v");
    } else {
      r.need(16 * n, "moments");
      r.at += 16 * n;
    }
  }
  if (r.at != r.buf.size()) r.fail("trailing bytes");

  if (opt) opt->set_steps(meta.adam_steps);
  if (rng) rng->set_state(meta.rng_state);
  return meta;
}

}  // namespace trireid::ckpt
