#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "heterrec/train/trainer.hpp"

namespace heterrec::train {

// A data directory holds interactions.jsonl, items.jsonl and schema.json, and
// optionally a fitted codebook (codebook.json + codebook.bin).
std::unique_ptr<PreparedData> load_data_dir(const std::filesystem::path& dir);

inline constexpr std::array<std::pair<std::size_t, std::size_t>, 7> kScalingPairs{
    {{1, 1}, {1, 2}, {2, 2}, {3, 3}, {4, 4}, {5, 5}, {6, 6}}};

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "htfl_off", "mfk_off", "hct_off", "lmp_off", "tlmp_off"};
  return v;
}

// Copy of `base` with one ablation flag switched on ("full" switches none).
TrainConfig with_variant(const TrainConfig& base, const std::string& variant);

std::string scaling_name(std::size_t n1, std::size_t n2);  // "scaling_n1-2_n2-2"

struct StudyOptions {
  std::filesystem::path out_dir;
  std::size_t seeds = 1;      // ablation only: base seed, base seed + 1, ...
  bool verbose = false;
};

// One run per (N1, N2) pair; writes <out>/<scaling_name>.json per run plus
// summary.json. Returns the summary.
nlohmann::json scaling_study(const TrainConfig& base, const PreparedData& data, const StudyOptions& options);

// One run per variant and seed; writes <out>/ablation_<variant>_seed<s>.json
// and summary.json with per-variant mean and standard error.
nlohmann::json ablation_study(const TrainConfig& base, const PreparedData& data, const StudyOptions& options);

}  // namespace heterrec::train
