#include "heterrec/train/train_config.hpp"

#include <fstream>

#include "heterrec/errors.hpp"
#include "heterrec/json_util.hpp"

namespace heterrec::train {

nlohmann::json AblationFlags::to_json() const {
  return {{"htfl_off", htfl_off}, {"mfk_off", mfk_off}, {"hct_off", hct_off}, {"lmp_off", lmp_off},
          {"tlmp_off", tlmp_off}};
}

AblationFlags AblationFlags::from_json(const nlohmann::json& j) {
  require_known_keys(j, {"htfl_off", "mfk_off", "hct_off", "lmp_off", "tlmp_off"}, "ablation");
  AblationFlags a;
  read_opt(j, "htfl_off", a.htfl_off, "ablation");
  read_opt(j, "mfk_off", a.mfk_off, "ablation");
  read_opt(j, "hct_off", a.hct_off, "ablation");
  read_opt(j, "lmp_off", a.lmp_off, "ablation");
  read_opt(j, "tlmp_off", a.tlmp_off, "ablation");
  return a;
}

ModelConfig TrainConfig::effective_model() const {
  ModelConfig m = model;
  m.htfl_off = m.htfl_off || ablation.htfl_off;
  m.mfk_off = m.mfk_off || ablation.mfk_off;
  m.hct_off = m.hct_off || ablation.hct_off;
  if (scaling) {
    m.token_layers = scaling->first;
    m.item_layers = scaling->second;
  }
  return m;
}

lmp::LmpConfig TrainConfig::effective_lmp() const {
  lmp::LmpConfig l = lmp;
  if (ablation.lmp_off) {
    l.gated = false;
    l.token_gated = false;
    l.margin = 0.0;
    l.token_margin = 0.0;
  }
  if (ablation.tlmp_off) l.token_level = false;
  return l;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 (in-batch negatives)");
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (micro_batches == 0 || micro_batches > batch_size) throw ConfigError("train: micro_batches must lie in [1, batch_size]");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (cutoffs.empty()) throw ConfigError("train: at least one cutoff is required");
  for (auto n : cutoffs) {
    if (n == 0) throw ConfigError("train: cutoffs must be >= 1");
  }
  if (scaling && (scaling->first == 0 || scaling->second == 0)) throw ConfigError("train: scaling pair entries must be >= 1");
  effective_lmp().validate();
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"batch_size", "epochs", "micro_batches", "learning_rate", "beta1", "beta2", "epsilon", "seed",
                      "ablation", "scaling", "model", "lmp", "cutoffs", "eval_every", "eval_users"},
                     "train");
  TrainConfig c;
  const std::string w = "train";
  read_opt(j, "batch_size", c.batch_size, w);
  read_opt(j, "epochs", c.epochs, w);
  read_opt(j, "micro_batches", c.micro_batches, w);
  read_opt(j, "learning_rate", c.learning_rate, w);
  read_opt(j, "beta1", c.beta1, w);
  read_opt(j, "beta2", c.beta2, w);
  read_opt(j, "epsilon", c.epsilon, w);
  read_opt(j, "seed", c.seed, w);
  read_opt(j, "cutoffs", c.cutoffs, w);
  read_opt(j, "eval_every", c.eval_every, w);
  read_opt(j, "eval_users", c.eval_users, w);
  if (j.contains("ablation")) c.ablation = AblationFlags::from_json(j.at("ablation"));
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("lmp")) c.lmp = lmp::LmpConfig::from_json(j.at("lmp"));
  if (j.contains("scaling") && !j.at("scaling").is_null()) {
    std::vector<std::size_t> pair;
    read_opt(j, "scaling", pair, w);
    if (pair.size() != 2) throw ConfigError("train.scaling must be [N1, N2]");
    c.scaling = std::pair{pair[0], pair[1]};
  }
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"batch_size", batch_size},
                   {"epochs", epochs},
                   {"micro_batches", micro_batches},
                   {"learning_rate", learning_rate},
                   {"beta1", beta1},
                   {"beta2", beta2},
                   {"epsilon", epsilon},
                   {"seed", seed},
                   {"ablation", ablation.to_json()},
                   {"model", model.to_json()},
                   {"lmp", lmp.to_json()},
                   {"cutoffs", cutoffs},
                   {"eval_every", eval_every},
                   {"eval_users", eval_users}};
  j["scaling"] = scaling ? nlohmann::json::array({scaling->first, scaling->second}) : nlohmann::json(nullptr);
  return j;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return TrainConfig::from_json(j);
}

}  // namespace heterrec::train
