#include "heterrec/model.hpp"

#include <algorithm>

#include "heterrec/errors.hpp"

namespace heterrec {

using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;

HeterRecModel::HeterRecModel(const htfl::Tokenizer& tokenizer, const htfl::TokenizedCatalog& catalog,
                             ModelConfig model, lmp::LmpConfig lmp)
    : tokenizer_(tokenizer), catalog_(catalog), model_(model), lmp_(lmp) {
  model_.validate(tokenizer_.schema().token_dim);
  lmp_.validate();
}

bool HeterRecModel::token_level_active() const { return lmp_.token_level && !model_.htfl_off && !model_.hct_off; }

ParamStore<float> HeterRecModel::init_params(std::uint64_t seed) const {
  ParamStore<float> store;
  numerics::ParamInit init(seed);
  const auto& schema = tokenizer_.schema();
  htfl::declare_htfl_params(store, tokenizer_, model_, init);
  hct::declare_tower_params(store, schema.size(), schema.token_dim, model_, init);
  lmp::declare_head_params(store, "lmp.item", model_.item_dim, lmp_.steps, init);
  if (token_level_active()) {
    for (const auto& f : schema.features) {
      lmp::declare_head_params(store, "lmp.token." + f.name, schema.token_dim, lmp_.steps, init);
    }
  }
  return store;
}

template <typename T>
BatchStates<T> HeterRecModel::batch_states(Tape<T>& tape, const ParamStore<T>& params,
                                           std::span<const UserSequence> batch, bool with_items) const {
  if (batch.empty()) throw DataError("empty training batch");
  htfl::HtflEncoder<T> encoder(params, tokenizer_, catalog_, model_);
  hct::UserTower<T> user_tower(params, model_);

  const std::size_t K = tokenizer_.num_features();
  const bool token_level = token_level_active();

  BatchStates<T> st;
  std::vector<Tensor<T>> users;
  std::vector<std::vector<Tensor<T>>> per_type(token_level ? K : 0);
  std::vector<std::int64_t> target_items;
  for (const auto& seq : batch) {
    if (seq.items.size() < 2) throw DataError("user " + seq.user_id + " needs at least 2 items for training");
    if (seq.items.size() != seq.timestamps.size()) throw DataError("user " + seq.user_id + ": ragged sequence");
    // keep T_max input positions plus the final target
    const std::size_t keep = std::min(seq.items.size(), model_.max_seq_len + 1);
    const std::size_t start = seq.items.size() - keep;
    std::vector<std::int64_t> in(seq.items.begin() + start, seq.items.end() - 1);
    std::vector<std::int64_t> ts(seq.timestamps.begin() + start, seq.timestamps.end() - 1);
    target_items.insert(target_items.end(), seq.items.begin() + start + 1, seq.items.end());
    st.lengths.push_back(in.size());

    auto out = user_tower.forward(tape, encoder.flatten(tape, std::move(in), std::move(ts)));
    users.push_back(out.user);
    if (token_level) {
      const std::size_t n = st.lengths.back();
      for (std::size_t s = 0; s < K; ++s) {
        std::vector<std::int64_t> pos(n);
        for (std::size_t t = 0; t < n; ++t) pos[t] = static_cast<std::int64_t>(t * K + s);
        per_type[s].push_back(tape.gather_rows(out.token_states, pos));
      }
    }
  }
  auto cat = [&](std::vector<Tensor<T>>& parts) { return parts.size() == 1 ? parts[0] : tape.concat_rows(parts); };
  st.user = cat(users);
  for (auto& parts : per_type) st.type_states.push_back(cat(parts));

  st.unique_items = target_items;
  std::sort(st.unique_items.begin(), st.unique_items.end());
  st.unique_items.erase(std::unique(st.unique_items.begin(), st.unique_items.end()), st.unique_items.end());
  st.target_slot.resize(target_items.size());
  for (std::size_t i = 0; i < target_items.size(); ++i) {
    st.target_slot[i] = std::lower_bound(st.unique_items.begin(), st.unique_items.end(), target_items[i]) -
                        st.unique_items.begin();
  }
  if (with_items) {
    hct::ItemTower<T> item_tower(params, encoder);
    auto items = item_tower.forward(tape, st.unique_items);
    st.item = items.item;
    st.item_tokens = std::move(items.tokens);
  }
  return st;
}

template <typename T>
BatchLoss<T> HeterRecModel::loss_from_states(Tape<T>& tape, const ParamStore<T>& params,
                                             const BatchStates<T>& st) const {
  BatchLoss<T> loss;
  loss.item = lmp::level_loss(tape, params, "lmp.item", st.user, tape.gather_rows(st.item, st.target_slot),
                              st.lengths, lmp_.steps, lmp_.temperature, lmp_.margin, lmp_.gated, lmp_.form);
  loss.total = loss.item.total;
  for (std::size_t s = 0; s < st.type_states.size(); ++s) {
    const auto& name = tokenizer_.schema().at(s).name;
    auto level = lmp::level_loss(tape, params, "lmp.token." + name, st.type_states[s],
                                 tape.gather_rows(st.item_tokens[s], st.target_slot), st.lengths, lmp_.steps,
                                 lmp_.temperature, lmp_.token_margin, lmp_.gated && lmp_.token_gated, lmp_.form);
    loss.total = tape.add(loss.total, level.total);
    loss.token.push_back(std::move(level));
  }
  return loss;
}

template <typename T>
BatchLoss<T> HeterRecModel::batch_loss(Tape<T>& tape, const ParamStore<T>& params,
                                       std::span<const UserSequence> batch) const {
  return loss_from_states(tape, params, batch_states(tape, params, batch));
}

#define HETERREC_INSTANTIATE(T)                                                                                    \
  template BatchStates<T> HeterRecModel::batch_states<T>(Tape<T>&, const ParamStore<T>&,                            \
                                                         std::span<const UserSequence>, bool) const;               \
  template BatchLoss<T> HeterRecModel::loss_from_states<T>(Tape<T>&, const ParamStore<T>&, const BatchStates<T>&)  \
      const;                                                                                                       \
  template BatchLoss<T> HeterRecModel::batch_loss<T>(Tape<T>&, const ParamStore<T>&, std::span<const UserSequence>) \
      const;

HETERREC_INSTANTIATE(float)
HETERREC_INSTANTIATE(double)
#undef HETERREC_INSTANTIATE

std::vector<float> HeterRecModel::user_embeddings(const ParamStore<float>& params,
                                                  std::span<const UserSequence> histories) const {
  htfl::HtflEncoder<float> encoder(params, tokenizer_, catalog_, model_);
  hct::UserTower<float> tower(params, model_);
  const std::size_t dk = model_.item_dim;
  std::vector<float> out;
  out.reserve(histories.size() * dk);
  const auto& w = params.get(lmp::head_prefix("lmp.item", 1) + ".w");
  const auto& b = params.get(lmp::head_prefix("lmp.item", 1) + ".b");
  for (const auto& h : histories) {
    Tape<float> tape(false);
    auto u = tower.forward(tape, encoder.flatten(tape, h.items, h.timestamps)).user;
    auto last = tape.slice_rows(u, u.rows() - 1, u.rows());
    auto e = tape.add_bias(tape.matmul(last, w), b);
    out.insert(out.end(), e.data().begin(), e.data().end());
  }
  return out;
}

std::vector<float> HeterRecModel::item_embeddings(const ParamStore<float>& params) const {
  htfl::HtflEncoder<float> encoder(params, tokenizer_, catalog_, model_);
  hct::ItemTower<float> tower(params, encoder);
  std::vector<float> out;
  out.reserve(num_items() * model_.item_dim);
  constexpr std::size_t kChunk = 512;
  for (std::size_t s = 0; s < num_items(); s += kChunk) {
    const std::size_t e = std::min(num_items(), s + kChunk);
    std::vector<std::int64_t> ids(e - s);
    for (std::size_t i = s; i < e; ++i) ids[i - s] = static_cast<std::int64_t>(i);
    Tape<float> tape(false);
    auto v = tower.forward(tape, ids).item;
    out.insert(out.end(), v.data().begin(), v.data().end());
  }
  return out;
}

}  // namespace heterrec
