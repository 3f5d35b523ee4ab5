#include "heterrec/train/studies.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "heterrec/errors.hpp"

namespace heterrec::train {

namespace fs = std::filesystem;

std::unique_ptr<PreparedData> load_data_dir(const fs::path& dir) {
  for (const char* f : {"interactions.jsonl", "items.jsonl", "schema.json"}) {
    if (!fs::exists(dir / f)) throw DataError("data directory " + dir.string() + " has no " + f);
  }
  auto schema = htfl::load_schema((dir / "schema.json").string());
  auto dataset = data::ingest(dir / "interactions.jsonl", dir / "items.jsonl");
  std::optional<htfl::QuantileCodebook> codebook;
  if (fs::exists(dir / "codebook.json")) codebook = htfl::read_codebook(dir / "codebook.json");
  return std::make_unique<PreparedData>(std::move(dataset), std::move(schema), std::move(codebook));
}

TrainConfig with_variant(const TrainConfig& base, const std::string& variant) {
  TrainConfig c = base;
  c.ablation = {};
  if (variant == "full") return c;
  if (variant == "htfl_off") c.ablation.htfl_off = true;
  else if (variant == "mfk_off") c.ablation.mfk_off = true;
  else if (variant == "hct_off") c.ablation.hct_off = true;
  else if (variant == "lmp_off") c.ablation.lmp_off = true;
  else if (variant == "tlmp_off") c.ablation.tlmp_off = true;
  else throw ConfigError("unknown ablation variant '" + variant + "'");
  return c;
}

std::string scaling_name(std::size_t n1, std::size_t n2) {
  return "scaling_n1-" + std::to_string(n1) + "_n2-" + std::to_string(n2);
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream(path, std::ios::binary) << j.dump(2) << '\n';
}

ExperimentOptions run_options(fs::path dir, bool verbose) {
  ExperimentOptions o;
  o.out_dir = std::move(dir);
  o.verbose = verbose;
  return o;
}

nlohmann::json final_metrics(const nlohmann::json& report) { return report.at("final"); }

}  // namespace

nlohmann::json scaling_study(const TrainConfig& base, const PreparedData& data, const StudyOptions& options) {
  fs::create_directories(options.out_dir);
  nlohmann::json runs = nlohmann::json::array();
  for (auto [n1, n2] : kScalingPairs) {
    TrainConfig c = base;
    c.scaling = std::pair{n1, n2};
    const auto name = scaling_name(n1, n2);
    if (options.verbose) std::cerr << "== " << name << '\n';
    auto report = run_experiment(c, data, run_options(options.out_dir / name, options.verbose));
    write_json(options.out_dir / (name + ".json"), report);
    runs.push_back({{"n1", n1}, {"n2", n2}, {"report", name + ".json"}, {"parameters", report.at("parameters")},
                    {"final", final_metrics(report)}});
  }
  nlohmann::json summary{{"study", "scaling"}, {"runs", runs}};
  write_json(options.out_dir / "summary.json", summary);
  return summary;
}

nlohmann::json ablation_study(const TrainConfig& base, const PreparedData& data, const StudyOptions& options) {
  if (options.seeds == 0) throw ConfigError("ablation study needs at least one seed");
  fs::create_directories(options.out_dir);
  nlohmann::json variants = nlohmann::json::object();
  for (const auto& v : ablation_variants()) {
    nlohmann::json runs = nlohmann::json::array();
    std::map<std::string, std::vector<double>> samples;  // "recall@10" -> per seed
    for (std::size_t s = 0; s < options.seeds; ++s) {
      TrainConfig c = with_variant(base, v);
      c.seed = base.seed + s;
      const auto name = "ablation_" + v + "_seed" + std::to_string(c.seed);
      if (options.verbose) std::cerr << "== " << name << '\n';
      auto report = run_experiment(c, data, run_options(options.out_dir / name, options.verbose));
      write_json(options.out_dir / (name + ".json"), report);
      const auto& fin = final_metrics(report);
      for (auto cut : c.cutoffs) {
        samples["recall@" + std::to_string(cut)].push_back(fin.at("recall").at(std::to_string(cut)).get<double>());
        samples["ndcg@" + std::to_string(cut)].push_back(fin.at("ndcg").at(std::to_string(cut)).get<double>());
      }
      runs.push_back({{"seed", c.seed}, {"report", name + ".json"}, {"final", fin}});
    }
    nlohmann::json stats = nlohmann::json::object();
    for (const auto& [metric, xs] : samples) {
      const double n = static_cast<double>(xs.size());
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= n;
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double se = xs.size() > 1 ? std::sqrt(var / (n - 1)) / std::sqrt(n) : 0.0;
      stats[metric] = {{"mean", mean}, {"se", se}, {"values", xs}};
    }
    variants[v] = {{"runs", runs}, {"stats", stats}};
  }
  nlohmann::json summary{{"study", "ablation"}, {"seeds", options.seeds}, {"variants", variants}};
  write_json(options.out_dir / "summary.json", summary);
  return summary;
}

}  // namespace heterrec::train
