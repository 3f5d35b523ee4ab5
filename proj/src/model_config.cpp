#include "heterrec/model_config.hpp"

#include "heterrec/errors.hpp"
#include "heterrec/json_util.hpp"

namespace heterrec {

void ModelConfig::validate(std::size_t token_dim) const {
  if (item_dim == 0 || heads == 0) throw ConfigError("model: item_dim and heads must be positive");
  if (token_layers < 1 || item_layers < 1) throw ConfigError("model: token_layers and item_layers must be >= 1");
  if (token_dim % heads != 0) throw ConfigError("model: heads must divide the token width");
  if (item_dim % heads != 0) throw ConfigError("model: heads must divide item_dim");
  if (time_buckets == 0 || max_seq_len == 0) throw ConfigError("model: time_buckets and max_seq_len must be positive");
  if (token_ffn_hidden == 0 || item_ffn_hidden == 0) throw ConfigError("model: FFN widths must be positive");
  if (!(ln_eps > 0.0f)) throw ConfigError("model: ln_eps must be positive");
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"item_dim", "heads", "token_ffn_hidden", "item_ffn_hidden", "token_layers", "item_layers",
                      "time_buckets", "max_seq_len", "ln_eps", "bias_after_scale", "strict_causal_within_item",
                      "token_time_bias", "item_time_bias", "type_embedding", "htfl_off", "mfk_off", "hct_off"},
                     "model");
  ModelConfig c;
  const std::string w = "model";
  read_opt(j, "item_dim", c.item_dim, w);
  read_opt(j, "heads", c.heads, w);
  read_opt(j, "token_ffn_hidden", c.token_ffn_hidden, w);
  read_opt(j, "item_ffn_hidden", c.item_ffn_hidden, w);
  read_opt(j, "token_layers", c.token_layers, w);
  read_opt(j, "item_layers", c.item_layers, w);
  read_opt(j, "time_buckets", c.time_buckets, w);
  read_opt(j, "max_seq_len", c.max_seq_len, w);
  read_opt(j, "ln_eps", c.ln_eps, w);
  read_opt(j, "bias_after_scale", c.bias_after_scale, w);
  read_opt(j, "strict_causal_within_item", c.strict_causal_within_item, w);
  read_opt(j, "token_time_bias", c.token_time_bias, w);
  read_opt(j, "item_time_bias", c.item_time_bias, w);
  read_opt(j, "type_embedding", c.type_embedding, w);
  read_opt(j, "htfl_off", c.htfl_off, w);
  read_opt(j, "mfk_off", c.mfk_off, w);
  read_opt(j, "hct_off", c.hct_off, w);
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"item_dim", item_dim},
          {"heads", heads},
          {"token_ffn_hidden", token_ffn_hidden},
          {"item_ffn_hidden", item_ffn_hidden},
          {"token_layers", token_layers},
          {"item_layers", item_layers},
          {"time_buckets", time_buckets},
          {"max_seq_len", max_seq_len},
          {"ln_eps", ln_eps},
          {"bias_after_scale", bias_after_scale},
          {"strict_causal_within_item", strict_causal_within_item},
          {"token_time_bias", token_time_bias},
          {"item_time_bias", item_time_bias},
          {"type_embedding", type_embedding},
          {"htfl_off", htfl_off},
          {"mfk_off", mfk_off},
          {"hct_off", hct_off}};
}

}  // namespace heterrec
