#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"

namespace heterrec::eval {

// Catalog is row-major [n_items, dim]. Scores are inner products accumulated
// in double; ties go to the smaller item id.
std::vector<std::int64_t> score_catalog(std::span<const float> user, std::span<const float> catalog,
                                        std::size_t dim);

// 1-based rank of `truth` under the same ordering as score_catalog, in O(N).
std::size_t truth_rank(std::span<const float> user, std::span<const float> catalog, std::size_t dim,
                       std::int64_t truth);

// Rank of `truth` when items are ordered by a fixed score vector (descending, ties by id).
std::size_t rank_by_scores(std::span<const double> scores, std::int64_t truth);

double recall_at_n(std::size_t rank, std::size_t n);
double ndcg_at_n(std::size_t rank, std::size_t n);

struct MetricsReport {
  std::vector<std::size_t> cutoffs;
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;
  std::size_t users_evaluated = 0;
  std::size_t catalog_size = 0;

  nlohmann::json to_json() const;
};

MetricsReport aggregate(std::span<const std::size_t> ranks, std::span<const std::size_t> cutoffs,
                        std::size_t catalog_size);

// users: [n_users, dim], catalog: [n_items, dim].
MetricsReport evaluate_embeddings(std::span<const float> users, std::span<const float> catalog, std::size_t dim,
                                  std::span<const std::int64_t> truths, std::span<const std::size_t> cutoffs);

// Ranks every user's truth by global item frequency in `train_items`.
MetricsReport popularity_baseline(std::span<const std::int64_t> train_items, std::size_t catalog_size,
                                  std::span<const std::int64_t> truths, std::span<const std::size_t> cutoffs);

}  // namespace heterrec::eval
