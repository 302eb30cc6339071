#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trireid/checkpoint.hpp"
#include "trireid/config.hpp"
#include "trireid/error.hpp"
#include "trireid/gradcheck.hpp"
#include "trireid/train.hpp"

namespace {

using namespace trireid;
namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string manifest_of(const std::string& data_path) {
  if (fs::is_directory(data_path)) return (fs::path(data_path) / "manifest.json").string();
  return data_path;
}

RunConfig load_run_config(const std::string& config_path) {
  if (config_path.empty()) {
    RunConfig c;
    validate_run_config(c);
    return c;
  }
  return parse_run_config(slurp(config_path));
}

void check_geometry(const synth::Dataset& data, const ckpt::CheckpointMeta& meta) {
  if (data.d_raw != meta.d_raw || data.hp != meta.hp || data.wp != meta.wp) {
    throw ValueError("dataset geometry does not match the checkpoint");
  }
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  synth::SynthConfig cfg =
      config_path.empty() ? synth::SynthConfig{} : parse_synth_config(slurp(config_path));
  synth::Dataset data = synth::generate(cfg);
  std::string manifest = synth::save_dataset(data, out_dir);
  std::cout << "wrote " << manifest << " (train " << data.train.size() << ", query "
            << data.query.size() << ", gallery " << data.gallery.size() << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_dir, const std::string& resume_path) {
  RunConfig cfg = load_run_config(config_path);
  synth::Dataset data = synth::load_dataset(manifest_of(data_path));
  auto res = train::train_run(cfg, data, out_dir,
                              [](const train::EpochMetrics& em) {
                                std::cout << train::metrics_json(em) << "\n";
                                std::cout.flush();
                              },
                              resume_path);
  std::cout << "checkpoint " << res.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& report_path) {
  ckpt::CheckpointMeta meta = ckpt::read_checkpoint_meta(ckpt_path);
  RunConfig cfg = parse_run_config(meta.config_json);
  synth::Dataset data = synth::load_dataset(manifest_of(data_path));
  check_geometry(data, meta);

  Rng rng(0);  // placeholder weights, overwritten by the load
  model::Model m = model::build_model(cfg, meta.d_raw, meta.hp, meta.wp, meta.num_classes, rng);
  ckpt::load_checkpoint(ckpt_path, m, nullptr, nullptr);

  auto report = train::evaluate_model(m, data);
  std::string json = eval::report_json(report, {1, 5, 10});
  std::cout << json << "\n";
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + report_path);
    out << json << "\n";
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed) {
  auto rows = gradcheck_suite(seed);
  size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.op.size());
  bool all_pass = true;
  for (const auto& r : rows) {
    std::printf("%-*s  %12.3e  %s\n", static_cast<int>(width), r.op.c_str(), r.max_rel_err,
                r.pass ? "pass" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu ops checked, %s\n", rows.size(), all_pass ? "all passed" : "FAILURES above");
  if (!all_pass) throw NumericError("gradient check failed");
  return 0;
}

struct Variant {
  const char* key;
  const char* label;
  bool sim, gam, lam;
};

constexpr Variant kVariants[] = {
    {"baseline", "baseline", false, false, false},
    {"sim", "+SIM", true, false, false},
    {"sim_gam", "+SIM+GAM", true, true, false},
    {"full", "full", true, true, true},
};

int cmd_ablate(const std::string& config_path, const std::string& data_path,
               const std::string& out_dir, int num_seeds) {
  RunConfig base = load_run_config(config_path);
  synth::Dataset data = synth::load_dataset(manifest_of(data_path));

  std::vector<uint64_t> seeds;
  for (int i = 0; i < num_seeds; ++i) seeds.push_back(base.seed + static_cast<uint64_t>(i));

  nlohmann::json maps = nlohmann::json::object();
  std::vector<std::array<double, 4>> by_seed(seeds.size());
  for (size_t si = 0; si < seeds.size(); ++si) {
    for (size_t vi = 0; vi < 4; ++vi) {
      const Variant& v = kVariants[vi];
      RunConfig cfg = base;
      cfg.seed = seeds[si];
      cfg.use_sim = v.sim;
      cfg.use_gam = v.gam;
      cfg.use_lam = v.lam;
      if (!v.sim && cfg.gam_pool_source == "selected") cfg.gam_pool_source = "original";
      std::string run_dir =
          (fs::path(out_dir) / (std::string(v.key) + "-s" + std::to_string(seeds[si]))).string();
      auto res = train::train_run(cfg, data, run_dir);
      auto report = train::evaluate_model(res.model, data);
      by_seed[si][vi] = report.map;
      maps[v.key].push_back(report.map);
      std::printf("seed %llu  %-9s mAP %.4f\n", static_cast<unsigned long long>(seeds[si]),
                  v.label, report.map);
      std::fflush(stdout);
    }
  }

  int ordering_holds = 0;
  for (const auto& row : by_seed) {
    if (row[3] >= row[2] && row[2] >= row[1] && row[1] >= row[0]) ++ordering_holds;
  }

  std::printf("\n%-9s", "variant");
  for (uint64_t s : seeds) std::printf("  seed%-6llu", static_cast<unsigned long long>(s));
  std::printf("\n");
  for (size_t vi = 0; vi < 4; ++vi) {
    std::printf("%-9s", kVariants[vi].label);
    for (size_t si = 0; si < seeds.size(); ++si) std::printf("  %-10.4f", by_seed[si][vi]);
    std::printf("\n");
  }
  std::printf("ordering full >= +SIM+GAM >= +SIM >= baseline holds in %d/%zu seeds\n",
              ordering_holds, seeds.size());

  nlohmann::json j;
  j["seeds"] = seeds;
  j["map"] = maps;
  j["ordering_holds"] = ordering_holds;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::string summary_path = (fs::path(out_dir) / "ablation.json").string();
  std::ofstream out(summary_path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + summary_path);
  out << j.dump(2) << "\n";
  std::printf("wrote %s\n", summary_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-modal re-identification workbench"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir, ckpt_path, resume_path, report_path;
  uint64_t seed = 1;
  int num_seeds = 5;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic tri-modal dataset");
  gen->add_option("--config", config_path, "generation config JSON");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "run config JSON");
  tr->add_option("--data", data_path, "dataset dir or manifest")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* ev = app.add_subcommand("eval", "score retrieval with a trained checkpoint");
  ev->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  ev->add_option("--data", data_path, "dataset dir or manifest")->required();
  ev->add_option("--report", report_path, "also write the JSON report here");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc->add_option("--seed", seed, "probe seed");

  auto* ab = app.add_subcommand("ablate", "train the component ladder across seeds");
  ab->add_option("--config", config_path, "base run config JSON");
  ab->add_option("--data", data_path, "dataset dir or manifest")->required();
  ab->add_option("--out", out_dir, "output directory")->required();
  ab->add_option("--seeds", num_seeds, "number of consecutive seeds")->check(CLI::Range(1, 16));

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (tr->parsed()) return cmd_train(config_path, data_path, out_dir, resume_path);
    if (ev->parsed()) return cmd_eval(ckpt_path, data_path, report_path);
    if (gc->parsed()) return cmd_gradcheck(seed);
    if (ab->parsed()) return cmd_ablate(config_path, data_path, out_dir, num_seeds);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
