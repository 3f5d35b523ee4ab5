#include "heterrec/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "heterrec/errors.hpp"

namespace heterrec::eval {

namespace {

std::vector<double> scores_for(std::span<const float> user, std::span<const float> catalog, std::size_t dim) {
  if (dim == 0 || user.size() != dim) throw DimensionError("user embedding width does not match catalog width");
  if (catalog.empty()) throw DataError("cannot rank an empty catalog");
  if (catalog.size() % dim != 0) throw DimensionError("catalog size is not a multiple of the embedding width");
  const std::size_t n = catalog.size() / dim;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) acc += static_cast<double>(user[c]) * catalog[i * dim + c];
    s[i] = acc;
  }
  return s;
}

}  // namespace

std::vector<std::int64_t> score_catalog(std::span<const float> user, std::span<const float> catalog,
                                        std::size_t dim) {
  const auto s = scores_for(user, catalog, dim);
  std::vector<std::int64_t> ids(s.size());
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  std::stable_sort(ids.begin(), ids.end(), [&](std::int64_t a, std::int64_t b) {
    return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
  });
  return ids;
}

std::size_t rank_by_scores(std::span<const double> scores, std::int64_t truth) {
  if (truth < 0 || static_cast<std::size_t>(truth) >= scores.size()) {
    throw DataError("ground-truth item " + std::to_string(truth) + " is not in the catalog");
  }
  const double st = scores[static_cast<std::size_t>(truth)];
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > st || (scores[i] == st && static_cast<std::int64_t>(i) < truth)) ++ahead;
  }
  return ahead + 1;
}

std::size_t truth_rank(std::span<const float> user, std::span<const float> catalog, std::size_t dim,
                       std::int64_t truth) {
  return rank_by_scores(scores_for(user, catalog, dim), truth);
}

double recall_at_n(std::size_t rank, std::size_t n) {
  if (n == 0) throw ContractError("cutoff must be >= 1");
  return rank <= n ? 1.0 : 0.0;
}

double ndcg_at_n(std::size_t rank, std::size_t n) {
  if (n == 0) throw ContractError("cutoff must be >= 1");
  return rank <= n ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json r = nlohmann::json::object(), g = nlohmann::json::object();
  for (auto n : cutoffs) {
    r[std::to_string(n)] = recall.at(n);
    g[std::to_string(n)] = ndcg.at(n);
  }
  return {{"cutoffs", cutoffs},
          {"recall", r},
          {"ndcg", g},
          {"users_evaluated", users_evaluated},
          {"catalog_size", catalog_size}};
}

MetricsReport aggregate(std::span<const std::size_t> ranks, std::span<const std::size_t> cutoffs,
                        std::size_t catalog_size) {
  MetricsReport m;
  m.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  m.users_evaluated = ranks.size();
  m.catalog_size = catalog_size;
  for (auto n : cutoffs) {
    // integer hit counts and rank-ordered sums keep the mean independent of user order
    std::size_t hits = 0;
    std::vector<double> gains;
    for (auto r : ranks) {
      hits += r <= n;
      if (r <= n) gains.push_back(ndcg_at_n(r, n));
    }
    std::sort(gains.begin(), gains.end());
    const double denom = ranks.empty() ? 1.0 : static_cast<double>(ranks.size());
    m.recall[n] = static_cast<double>(hits) / denom;
    m.ndcg[n] = std::accumulate(gains.begin(), gains.end(), 0.0) / denom;
  }
  return m;
}

MetricsReport evaluate_embeddings(std::span<const float> users, std::span<const float> catalog, std::size_t dim,
                                  std::span<const std::int64_t> truths, std::span<const std::size_t> cutoffs) {
  if (users.size() != truths.size() * dim) throw DimensionError("one user embedding per ground-truth item expected");
  std::vector<std::size_t> ranks(truths.size());
  for (std::size_t u = 0; u < truths.size(); ++u) {
    ranks[u] = truth_rank(users.subspan(u * dim, dim), catalog, dim, truths[u]);
  }
  return aggregate(ranks, cutoffs, catalog.size() / dim);
}

MetricsReport popularity_baseline(std::span<const std::int64_t> train_items, std::size_t catalog_size,
                                  std::span<const std::int64_t> truths, std::span<const std::size_t> cutoffs) {
  std::vector<double> counts(catalog_size, 0.0);
  for (auto i : train_items) {
    if (i < 0 || static_cast<std::size_t>(i) >= catalog_size) throw DataError("training item outside the catalog");
    counts[static_cast<std::size_t>(i)] += 1.0;
  }
  std::vector<std::size_t> ranks(truths.size());
  for (std::size_t u = 0; u < truths.size(); ++u) ranks[u] = rank_by_scores(counts, truths[u]);
  return aggregate(ranks, cutoffs, catalog_size);
}

}  // namespace heterrec::eval
