#include "trireid/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "trireid/error.hpp"
#include "trireid/rng.hpp"
#include "trireid/sgt1.hpp"

namespace trireid::synth {

namespace {

constexpr const char* kModNames[3] = {"R", "N", "T"};
constexpr const char* kSplitNames[3] = {"train", "query", "gallery"};

void validate(const SynthConfig& c) {
  if (c.num_ids < 2) throw ValueError("synth: need at least 2 identities");
  if (c.samples_per_id < 1 || c.query_per_id < 1 || c.gallery_per_id < 1)
    throw ValueError("synth: every split needs at least one sample per identity");
  if (c.hp < 1 || c.wp < 1 || c.d_raw < 1) throw ValueError("synth: bad grid or feature dims");
  int l = c.hp * c.wp;
  int fg = static_cast<int>(std::lround(c.rho * l));
  if (c.rho <= 0.0 || c.rho > 1.0 || fg < 1 || fg > l)
    throw ValueError("synth: foreground fraction " + std::to_string(c.rho) +
                     " is infeasible on a " + std::to_string(c.hp) + "x" + std::to_string(c.wp) +
                     " grid");
  for (const auto& s : c.shifts)
    if (std::abs(s[0]) >= c.hp || std::abs(s[1]) >= c.wp)
      throw ValueError("synth: shift exceeds the grid");
}

Tensor draw_mixing(Rng& rng, int d) {
  Tensor m = Tensor::zeros({d, d});
  double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& v : m.data()) v = scale * rng.normal();
  return m;
}

// content is produced in the unshifted frame, then rolled toroidally
Tensor roll_grid(const Tensor& content, int hp, int wp, int dr, int dc) {
  int d = content.dim(1);
  Tensor out = Tensor::zeros(content.shape());
  for (int i = 0; i < hp; ++i)
    for (int j = 0; j < wp; ++j) {
      int ti = ((i + dr) % hp + hp) % hp;
      int tj = ((j + dc) % wp + wp) % wp;
      for (int c = 0; c < d; ++c)
        out.data()[(static_cast<size_t>(ti) * wp + tj) * d + c] = content(i * wp + j, c);
    }
  return out;
}

SampleRecord make_sample(Rng& rng, const SynthConfig& cfg, const std::array<Tensor, 3>& mixing,
                         const std::vector<double>& latent, int id, int start) {
  int l = cfg.hp * cfg.wp, d = cfg.d_raw;
  int fg_count = static_cast<int>(std::lround(cfg.rho * l));

  SampleRecord rec;
  rec.id = id;
  rec.shifts = cfg.shifts;
  rec.fg_mask = Tensor::zeros({l});
  for (int k = 0; k < fg_count; ++k) rec.fg_mask.data()[(start + k) % l] = 1.0;

  for (int m = 0; m < 3; ++m) {
    // identity signature of this modality: mixing map applied to the latent
    std::vector<double> base(d, 0.0);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) base[r] += mixing[m](r, c) * latent[c];

    std::vector<double> bg_dir(d);
    for (auto& v : bg_dir) v = rng.normal();

    Tensor content = Tensor::zeros({l, d});
    for (int p = 0; p < l; ++p) {
      bool fg = rec.fg_mask.data()[p] != 0.0;
      for (int c = 0; c < d; ++c) {
        double v = fg ? base[c] + cfg.sigma_fg * rng.normal()
                      : cfg.sigma_bg * (bg_dir[c] + 0.5 * rng.normal());
        content.data()[static_cast<size_t>(p) * d + c] = v;
      }
    }
    rec.tokens[m] = roll_grid(content, cfg.hp, cfg.wp, cfg.shifts[m][0], cfg.shifts[m][1]);
  }
  return rec;
}

}  // namespace

Dataset generate(const SynthConfig& config) {
  validate(config);
  Rng rng(config.seed);

  std::array<Tensor, 3> mixing = config.mixing;
  for (auto& m : mixing)
    if (!m.defined()) m = draw_mixing(rng, config.d_raw);

  std::vector<std::vector<double>> latents(config.num_ids, std::vector<double>(config.d_raw));
  for (auto& z : latents)
    for (auto& v : z) v = rng.normal();

  // the foreground block position is an identity attribute: with all noise
  // switched off, samples of one identity must coincide exactly
  std::vector<int> starts(config.num_ids);
  for (auto& s : starts) s = rng.uniform_int(config.hp * config.wp);

  Dataset data;
  data.hp = config.hp;
  data.wp = config.wp;
  data.d_raw = config.d_raw;
  const int per_split[3] = {config.samples_per_id, config.query_per_id, config.gallery_per_id};
  std::vector<SampleRecord>* splits[3] = {&data.train, &data.query, &data.gallery};
  for (int s = 0; s < 3; ++s)
    for (int id = 0; id < config.num_ids; ++id)
      for (int k = 0; k < per_split[s]; ++k)
        splits[s]->push_back(make_sample(rng, config, mixing, latents[id], id, starts[id]));
  return data;
}

std::string save_dataset(const Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "trireid-dataset-v1";
  manifest["grid"] = {data.hp, data.wp};
  manifest["d_raw"] = data.d_raw;
  nlohmann::json samples = nlohmann::json::array();

  const std::vector<SampleRecord>* splits[3] = {&data.train, &data.query, &data.gallery};
  for (int s = 0; s < 3; ++s) {
    for (size_t i = 0; i < splits[s]->size(); ++i) {
      const SampleRecord& rec = (*splits[s])[i];
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s_%04zu", kSplitNames[s], i);
      nlohmann::json entry;
      entry["id"] = rec.id;
      entry["split"] = kSplitNames[s];
      nlohmann::json paths;
      for (int m = 0; m < 3; ++m) {
        std::string name = std::string(stem) + "_" + kModNames[m] + ".sgt1";
        write_sgt1(dir + "/" + name, rec.tokens[m]);
        paths[kModNames[m]] = name;
      }
      entry["paths"] = paths;
      std::string mask_name = std::string(stem) + "_mask.sgt1";
      write_sgt1(dir + "/" + mask_name, rec.fg_mask);
      entry["mask"] = mask_name;
      nlohmann::json shifts;
      for (int m = 0; m < 3; ++m) shifts[kModNames[m]] = {rec.shifts[m][0], rec.shifts[m][1]};
      entry["shifts"] = shifts;
      samples.push_back(entry);
    }
  }
  manifest["samples"] = samples;

  std::string path = dir + "/manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << manifest.dump(2) << "\n";
  if (!out) throw IoError("write failed on " + path);
  return path;
}

Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }

  auto need = [&](const char* key) {
    if (!manifest.contains(key)) throw FormatError(manifest_path + ": missing key " +
                                                   std::string(key));
  };
  need("format");
  need("grid");
  need("d_raw");
  need("samples");
  if (manifest["format"] != "trireid-dataset-v1")
    throw FormatError(manifest_path + ": unknown format " + manifest["format"].dump());

  Dataset data;
  data.hp = manifest["grid"][0].get<int>();
  data.wp = manifest["grid"][1].get<int>();
  data.d_raw = manifest["d_raw"].get<int>();
  std::string base = std::filesystem::path(manifest_path).parent_path().string();
  if (base.empty()) base = ".";

  for (const auto& entry : manifest["samples"]) {
    SampleRecord rec;
    rec.id = entry.at("id").get<int>();
    std::string split = entry.at("split").get<std::string>();
    for (int m = 0; m < 3; ++m) {
      std::string rel = entry.at("paths").at(kModNames[m]).get<std::string>();
      rec.tokens[m] = read_sgt1(base + "/" + rel);
      if (rec.tokens[m].rank() != 2 || rec.tokens[m].dim(0) != data.hp * data.wp ||
          rec.tokens[m].dim(1) != data.d_raw)
        throw FormatError(base + "/" + rel + ": tensor " + shape_str(rec.tokens[m].shape()) +
                          " does not match the manifest grid");
      const auto& sh = entry.at("shifts").at(kModNames[m]);
      rec.shifts[m] = {sh[0].get<int>(), sh[1].get<int>()};
    }
    rec.fg_mask = read_sgt1(base + "/" + entry.at("mask").get<std::string>());
    if (rec.fg_mask.rank() != 1 || rec.fg_mask.dim(0) != data.hp * data.wp)
      throw FormatError(base + "/" + entry.at("mask").get<std::string>() + ": mask " +
                        shape_str(rec.fg_mask.shape()) + " does not match the manifest grid");
    if (split == "train")
      data.train.push_back(std::move(rec));
    else if (split == "query")
      data.query.push_back(std::move(rec));
    else if (split == "gallery")
      data.gallery.push_back(std::move(rec));
    else
      throw FormatError(manifest_path + ": unknown split " + split);
  }
  return data;
}

}  // namespace trireid::synth
