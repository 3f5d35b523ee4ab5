// heterrec command-line tool. Exit codes: 0 ok, 1 data error, 2 config or
// usage error, 3 numeric failure (non-finite loss, failed gradient check).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "heterrec/data/dataset.hpp"
#include "heterrec/data/synthetic.hpp"
#include "heterrec/diagnostics.hpp"
#include "heterrec/errors.hpp"
#include "heterrec/htfl/codebook.hpp"
#include "heterrec/train/studies.hpp"
#include "heterrec/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace heterrec;

namespace {

constexpr int kExitData = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << j.dump(2) << '\n';
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw ConfigError("--out DIR is required");
  return g.out;
}

// Training configs may carry a "data" entry (relative to the config file)
// naming the data directory; everything else is the trainer's own schema.
struct RunSetup {
  train::TrainConfig config;
  std::optional<fs::path> data_dir;
};

RunSetup load_run_setup(const Globals& g, const std::string& data_flag) {
  RunSetup s;
  if (!g.config.empty()) {
    auto j = read_json(g.config);
    if (j.contains("data")) {
      fs::path d = j.at("data").get<std::string>();
      s.data_dir = d.is_absolute() ? d : fs::path(g.config).parent_path() / d;
      j.erase("data");
    }
    s.config = train::TrainConfig::from_json(j);
  }
  if (!data_flag.empty()) s.data_dir = data_flag;
  if (g.seed) s.config.seed = *g.seed;
  if (!s.data_dir) throw ConfigError("no data directory: pass --data DIR or set \"data\" in the config");
  return s;
}

int cmd_gen_synthetic(const Globals& g) {
  data::SyntheticSpec spec;
  if (!g.config.empty()) spec = data::SyntheticSpec::from_json(read_json(g.config));
  if (g.seed) spec.seed = *g.seed;
  spec.validate();
  const auto out = require_out(g);
  auto generated = data::generate_synthetic(spec);
  data::write_synthetic(out, generated);
  if (!g.quiet) {
    std::cerr << "wrote " << generated.items.size() << " items and " << generated.interactions.size()
              << " interactions to " << out.string() << '\n';
  }
  return 0;
}

int cmd_fit_codebook(const Globals& g, const std::string& items, const std::string& schema) {
  const auto out = require_out(g);
  auto s = htfl::load_schema(schema);
  auto records = data::read_items(items);
  auto cb = htfl::fit_codebook(s, records);
  fs::create_directories(out);
  htfl::write_codebook(out / "codebook.json", cb);
  for (const auto& w : cb.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_prepare(const Globals& g, const std::string& data_dir) {
  const auto out = require_out(g);
  auto prepared = train::load_data_dir(data_dir);
  fs::create_directories(out);
  data::write_items(out / "items.jsonl", prepared->dataset().items);
  data::write_interactions(out / "interactions.jsonl", prepared->dataset());
  write_json(out / "schema.json", prepared->tokenizer().schema().to_json());
  htfl::write_codebook(out / "codebook.json", prepared->tokenizer().codebook());
  // Token ids per item, one line each, in catalog order.
  std::ofstream tokens(out / "tokens.jsonl", std::ios::binary);
  const auto& cat = prepared->catalog();
  const auto& schema = prepared->tokenizer().schema();
  for (std::size_t i = 0; i < cat.num_items(); ++i) {
    nlohmann::json row{{"item_id", prepared->dataset().items[i].item_id}};
    for (std::size_t k = 0; k < cat.num_features(); ++k) {
      auto ids = cat.ids(k, i);
      row[schema.at(k).name] = std::vector<std::int64_t>(ids.begin(), ids.end());
    }
    tokens << row.dump() << '\n';
  }
  auto summary = prepared->dataset().summary();
  summary["train_users"] = prepared->split().train.size();
  summary["eval_users"] = prepared->split().eval_history.size();
  write_json(out / "summary.json", summary);
  if (!g.quiet) std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_train(const Globals& g, const std::string& data_flag, const std::string& resume,
              std::optional<std::size_t> stop_after) {
  auto setup = load_run_setup(g, data_flag);
  auto prepared = train::load_data_dir(*setup.data_dir);
  train::ExperimentOptions opt;
  if (!g.out.empty()) opt.out_dir = g.out;
  if (!resume.empty()) opt.resume = resume;
  opt.stop_after_epochs = stop_after;
  opt.verbose = !g.quiet;
  auto report = train::run_experiment(setup.config, *prepared, opt);
  if (!g.quiet) std::cout << report.at("final").dump(2) << '\n';
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& data_flag, const std::string& checkpoint) {
  if (data_flag.empty()) throw ConfigError("--data DIR is required");
  auto ckpt = numerics::read_checkpoint(checkpoint);
  if (!ckpt.meta.contains("config")) throw DataError(checkpoint + " carries no training config");
  auto config = train::TrainConfig::from_json(ckpt.meta.at("config"));
  auto prepared = train::load_data_dir(data_flag);
  train::Trainer trainer(*prepared, config);
  trainer.load(checkpoint);
  auto metrics = trainer.evaluate().to_json();
  if (!g.out.empty()) write_json(fs::path(g.out) / "metrics.json", metrics);
  std::cout << metrics.dump(2) << '\n';
  return 0;
}

int cmd_grad_check(const Globals& g, std::size_t seeds, const std::string& corrupt) {
  const std::uint64_t base = g.seed.value_or(0);
  bool ok = true;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t s = 0; s < seeds; ++s) {
    auto suite = diagnostics::gradient_suite(base + s, corrupt);
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : suite.checks) {
      checks.push_back({{"check", c.name}, {"max_rel_error", c.max_rel_error}, {"passed", c.passed}});
      if (!g.quiet || !c.passed) {
        std::cout << std::left << std::setw(8) << (c.passed ? "ok" : "FAIL") << std::setw(32) << c.name << " seed "
                  << suite.seed << "  rel.err " << std::scientific << std::setprecision(2) << c.max_rel_error
                  << std::defaultfloat << '\n';
      }
    }
    ok = ok && suite.passed();
    runs.push_back({{"seed", suite.seed}, {"passed", suite.passed()}, {"checks", checks}});
  }
  if (!g.out.empty()) write_json(fs::path(g.out) / "grad_check.json", {{"passed", ok}, {"runs", runs}});
  std::cout << (ok ? "gradient check passed" : "gradient check FAILED") << '\n';
  return ok ? 0 : kExitNumeric;
}

int cmd_study(const Globals& g, const std::string& data_flag, bool scaling, std::size_t seeds) {
  auto setup = load_run_setup(g, data_flag);
  auto prepared = train::load_data_dir(*setup.data_dir);
  train::StudyOptions opt;
  opt.out_dir = require_out(g);
  opt.seeds = seeds;
  opt.verbose = !g.quiet;
  auto summary = scaling ? train::scaling_study(setup.config, *prepared, opt)
                         : train::ablation_study(setup.config, *prepared, opt);
  if (!g.quiet) std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterrec: heterogeneous-feature sequential recommender"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "Random seed override");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  std::string data_dir, items, schema, resume, checkpoint, corrupt;
  std::optional<std::size_t> stop_after;
  std::size_t seeds = 1, gc_seeds = 1;

  auto* gen = app.add_subcommand("gen-synthetic", "Generate the planted-rule synthetic corpus");
  auto* fit = app.add_subcommand("fit-codebook", "Fit quantile codebooks and numerical bins");
  fit->add_option("--items", items, "items.jsonl")->required();
  fit->add_option("--schema", schema, "schema.json")->required();
  auto* prep = app.add_subcommand("prepare", "Ingest, validate and tokenize a data directory");
  prep->add_option("--data", data_dir, "Directory with interactions.jsonl, items.jsonl, schema.json")->required();
  auto* tr = app.add_subcommand("train", "Train and evaluate one configuration");
  tr->add_option("--data", data_dir, "Data directory (overrides the config's \"data\")");
  tr->add_option("--resume", resume, "Checkpoint manifest to continue from");
  tr->add_option("--stop-after", stop_after, "Stop after this many completed epochs");
  auto* ev = app.add_subcommand("evaluate", "Evaluate a training checkpoint");
  ev->add_option("--data", data_dir, "Data directory");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint manifest")->required();
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient checks");
  gc->add_option("--seeds", gc_seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  gc->add_option("--corrupt-op", corrupt, "Break one primitive's backward rule (negative control)");
  auto* sc = app.add_subcommand("study-scaling", "Train the seven (N1, N2) configurations");
  sc->add_option("--data", data_dir, "Data directory");
  auto* ab = app.add_subcommand("study-ablation", "Train the full model and each ablation");
  ab->add_option("--data", data_dir, "Data directory");
  ab->add_option("--seeds", seeds, "Seeds per variant")->check(CLI::PositiveNumber);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_synthetic(g);
    if (fit->parsed()) return cmd_fit_codebook(g, items, schema);
    if (prep->parsed()) return cmd_prepare(g, data_dir);
    if (tr->parsed()) return cmd_train(g, data_dir, resume, stop_after);
    if (ev->parsed()) return cmd_evaluate(g, data_dir, checkpoint);
    if (gc->parsed()) return cmd_grad_check(g, gc_seeds, corrupt);
    if (sc->parsed()) return cmd_study(g, data_dir, true, 1);
    if (ab->parsed()) return cmd_study(g, data_dir, false, seeds);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  std::cerr << app.help();
  return kExitConfig;
}
