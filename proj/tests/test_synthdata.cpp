#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "trireid/error.hpp"
#include "trireid/sgt1.hpp"
#include "trireid/synthdata.hpp"
#include "trireid/tensor.hpp"

using namespace trireid;

namespace {

std::string temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("trireid_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("generation: split sizes, shapes, and mask budget") {
  synth::SynthConfig cfg;
  synth::Dataset data = synth::generate(cfg);
  CHECK(data.train.size() == 80);
  CHECK(data.query.size() == 20);
  CHECK(data.gallery.size() == 20);
  const auto& rec = data.train[0];
  for (int m = 0; m < 3; ++m) {
    REQUIRE(rec.tokens[m].shape() == std::vector<int>({32, 16}));
  }
  int pop = 0;
  for (double v : rec.fg_mask.data()) pop += v != 0.0;
  CHECK(pop == 12);  // rho = 0.375 of 32 patches

  // identity sets of query and gallery coincide
  std::vector<int> qids, gids;
  for (const auto& r : data.query) qids.push_back(r.id);
  for (const auto& r : data.gallery) gids.push_back(r.id);
  for (int id : qids) CHECK(std::count(gids.begin(), gids.end(), id) > 0);
}

TEST_CASE("generation is deterministic for a fixed seed") {
  synth::SynthConfig cfg;
  cfg.seed = 42;
  synth::Dataset a = synth::generate(cfg);
  synth::Dataset b = synth::generate(cfg);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    for (int m = 0; m < 3; ++m) CHECK(same_values(a.train[i].tokens[m], b.train[i].tokens[m]));
    CHECK(same_values(a.train[i].fg_mask, b.train[i].fg_mask));
  }

  synth::SynthConfig other = cfg;
  other.seed = 43;
  synth::Dataset c = synth::generate(other);
  CHECK_FALSE(same_values(a.train[0].tokens[0], c.train[0].tokens[0]));
}

TEST_CASE("noise-free generation collapses same-identity samples") {
  synth::SynthConfig cfg;
  cfg.sigma_fg = 0.0;
  cfg.sigma_bg = 0.0;
  cfg.shifts = {{{0, 0}, {0, 0}, {0, 0}}};
  synth::Dataset data = synth::generate(cfg);
  // every sample of one identity is bit-identical, across splits too
  for (size_t i = 0; i < data.train.size(); ++i) {
    const auto& a = data.train[i];
    const auto& twin = data.train[(i / 8) * 8];  // first sample of the same id
    CHECK(a.id == twin.id);
    for (int m = 0; m < 3; ++m) CHECK(same_values(a.tokens[m], twin.tokens[m]));
  }
  for (const auto& q : data.query) {
    const auto& twin = data.train[static_cast<size_t>(q.id) * 8];
    REQUIRE(q.id == twin.id);
    for (int m = 0; m < 3; ++m) CHECK(same_values(q.tokens[m], twin.tokens[m]));
  }
  // different identities differ
  CHECK_FALSE(same_values(data.train[0].tokens[0], data.train[8].tokens[0]));
  // background rows are exactly zero at sigma_bg = 0
  const auto& rec = data.train[0];
  for (int p = 0; p < 32; ++p) {
    if (rec.fg_mask.data()[p] != 0.0) continue;
    for (int c = 0; c < 16; ++c) CHECK(rec.tokens[0](p, c) == 0.0);
  }
}

TEST_CASE("full foreground and infeasible fractions") {
  synth::SynthConfig cfg;
  cfg.rho = 1.0;
  synth::Dataset data = synth::generate(cfg);
  for (double v : data.train[0].fg_mask.data()) CHECK(v == 1.0);

  synth::SynthConfig bad
;
  bad.rho = 0.001;  // rounds to zero foreground patches
  CHECK_THROWS_AS(synth::generate(bad), ValueError);
  synth::SynthConfig big;
  big.shifts = {{{0, 0}, {9, 0}, {0, 0}}};
  CHECK_THROWS_AS(synth::generate(big), ValueError);
  synth::SynthConfig lone;
  lone.num_ids = 1;
  CHECK_THROWS_AS(synth::generate(lone), ValueError);
}

TEST_CASE("recorded shifts equal the applied toroidal translation") {
  synth::SynthConfig moved;
  moved.sigma_fg = 0.0;
  moved.sigma_bg = 0.0;
  moved.shifts = {{{0, 0}, {2, 1}, {0, 3}}};
  synth::SynthConfig still = moved;
  still.shifts = {{{0, 0}, {0, 0}, {0, 0}}};
  synth::Dataset a = synth::generate(moved);
  synth::Dataset b = synth::generate(still);

  // identical rng consumption: only the final roll differs between configs
  int hp = moved.hp, wp = moved.wp, d = moved.d_raw;
  for (size_t s = 0; s < a.train.size(); s += 7) {
    for (int m = 0; m < 3; ++m) {
      int dr = moved.shifts[m][0], dc = moved.shifts[m][1];
      CHECK(a.train[s].shifts[m][0] == dr);
      for (int i = 0; i < hp; ++i)
        for (int j = 0; j < wp; ++j)
          for (int c = 0; c < d; ++c) {
            int ti = (i + dr) % hp, tj = (j + dc) % wp;
            CHECK(a.train[s].tokens[m](ti * wp + tj, c) == b.train[s].tokens[m](i * wp + j, c));
          }
    }
  }
}

TEST_CASE("save and load: roundtrip at f32 precision, byte-stable files") {
  synth::SynthConfig cfg;
  cfg.num_ids = 3;
  cfg.samples_per_id = 2;
  cfg.query_per_id = 1;
  cfg.gallery_per_id = 1;
  synth::Dataset data = synth::generate(cfg);

  std::string dir1 = temp_dir("ds1");
  std::string manifest = synth::save_dataset(data, dir1);
  synth::Dataset loaded = synth::load_dataset(manifest);
  REQUIRE(loaded.train.size() == data.train.size());
  REQUIRE(loaded.query.size() == data.query.size());
  CHECK(loaded.hp == cfg.hp);
  for (size_t i = 0; i < data.train.size(); ++i) {
    CHECK(loaded.train[i].id == data.train[i].id);
    CHECK(loaded.train[i].shifts == data.train[i].shifts);
    for (int m = 0; m < 3; ++m) {
      REQUIRE(loaded.train[i].tokens[m].shape() == data.train[i].tokens[m].shape());
      for (size_t k = 0; k < data.train[i].tokens[m].numel(); ++k) {
        double original = data.train[i].tokens[m].data()[k];
        double expect = static_cast<double>(static_cast<float>(original));
        CHECK(loaded.train[i].tokens[m].data()[k] == expect);
      }
    }
  }

  std::string dir2 = temp_dir("ds2");
  synth::save_dataset(data, dir2);
  for (const auto& entry : std::filesystem::directory_iterator(dir1)) {
    auto name = entry.path().filename().string();
    CHECK(slurp(dir1 + "/" + name) == slurp(dir2 + "/" + name));
  }
}

TEST_CASE("loading rejects corruption and missing pieces") {
  synth::SynthConfig cfg;
  cfg.num_ids = 2;
  cfg.samples_per_id = 1;
  cfg.query_per_id = 1;
  cfg.gallery_per_id = 1;
  std::string dir = temp_dir("ds_bad");
  std::string manifest = synth::save_dataset(synth::generate(cfg), dir);

  // truncate one tensor payload
  {
    auto bytes = slurp(dir + "/train_0000_R.sgt1");
    std::ofstream out(dir + "/train_0000_R.sgt1", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
  }
  CHECK_THROWS_AS(synth::load_dataset(manifest), FormatError);

  CHECK_THROWS_AS(synth::load_dataset(dir + "/absent.json"), IoError);

  std::ofstream(dir + "/broken.json") << "{ not json";
  CHECK_THROWS_AS(synth::load_dataset(dir + "/broken.json"), FormatError);

  std::ofstream(dir + "/nokeys.json") << "{}";
  CHECK_THROWS_AS(synth::load_dataset(dir + "/nokeys.json"), FormatError);
}

TEST_CASE("hand-written minimal manifest loads one record") {
  std::string dir = temp_dir("ds_mini");
  Tensor tokens = Tensor::zeros({4, 2});
  for (size_t i = 0; i < tokens.numel(); ++i) tokens.data()[i] = static_cast<double>(i);
  Tensor mask = Tensor::from_data({4}, {1, 1, 0, 0});
  write_sgt1(dir + "/t.sgt1", tokens);
  write_sgt1(dir + "/m.sgt1", mask);
  std::ofstream(dir + "/manifest.json") << R"({
    "format": "trireid-dataset-v1",
    "grid": [2, 2],
    "d_raw": 2,
    "samples": [{
      "id": 5, "split": "query",
      "paths": {"R": "t.sgt1", "N": "t.sgt1", "T": "t.sgt1"},
      "mask": "m.sgt1",
      "shifts": {"R": [0, 0], "N": [1, 0], "T": [0, 1]}
    }]
  })";
  synth::Dataset data = synth::load_dataset(dir + "/manifest.json");
  CHECK(data.train.empty());
  REQUIRE(data.query.size() == 1);
  CHECK(data.query[0].id == 5);
  CHECK(data.query[0].shifts[1][0] == 1);
  CHECK(data.query[0].tokens[2](1, 1) == 3.0);

  // empty dataset saves to a manifest with an empty sample list
  std::string empty_dir = temp_dir("ds_empty");
  synth::Dataset none;
  none.hp = 2;
  none.wp = 2;
  none.d_raw = 2;
  std::string empty_manifest = synth::save_dataset(none, empty_dir);
  synth::Dataset back = synth::load_dataset(empty_manifest);
  CHECK(back.train.empty());
  CHECK(back.query.empty());
  CHECK(back.gallery.empty());
}
