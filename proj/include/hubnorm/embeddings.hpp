#pragma once

#include <algorithm>
#include <numeric>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hubnorm/error.hpp"
#include "hubnorm/types.hpp"

namespace hubnorm {

/// Rows closer than this to zero norm are rejected by l2_normalize_rows.
inline constexpr double kZeroNormTolerance = 1e-12;
/// Allowed deviation from unit norm for a set flagged as normalized.
inline constexpr double kUnitNormTolerance = 1e-9;

enum class Metric { cosine, neg_sq_l2 };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view text);

/// N x D embeddings for one modality, stored row-major in 64-bit reals.
///
/// Construction validates the invariants (non-empty, finite, unit rows when
/// flagged normalized); the object is immutable afterwards.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(Matrix data, bool normalized = false);

  Index n_rows() const noexcept { return data_.rows(); }
  Index dim() const noexcept { return data_.cols(); }
  bool normalized() const noexcept { return normalized_; }
  const Matrix& data() const noexcept { return data_; }
  auto row(Index i) const { return data_.row(i); }

  /// Rows selected by `indices`, in the given order.
  EmbeddingSet select_rows(const std::vector<Index>& indices) const;

 private:
  Matrix data_;
  bool normalized_;
};

/// Q x G similarities; higher always means closer, for both metrics.
struct SimilarityMatrix {
  Matrix values;
  Metric metric = Metric::cosine;

  Index n_queries() const noexcept { return values.rows(); }
  Index n_galleries() const noexcept { return values.cols(); }
};

/// Per-query gallery permutation, best first; equal similarities keep
/// ascending gallery order.
struct Ranking {
  IndexMatrix order;

  Index n_queries() const noexcept { return order.rows(); }
  Index n_galleries() const noexcept { return order.cols(); }
};

EmbeddingSet l2_normalize_rows(const EmbeddingSet& e);

SimilarityMatrix similarity(const EmbeddingSet& queries, const EmbeddingSet& galleries, Metric metric);

/// Similarity of one query vector against every gallery row. Bitwise equal to
/// the corresponding row of `similarity(...)`.
Vector similarity_row(const Eigen::Ref<const Eigen::RowVectorXd>& query, const EmbeddingSet& galleries,
                      Metric metric);

/// Stable descending argsort of one row of scores.
template <typename Derived>
std::vector<std::int32_t> rank_row(const Eigen::DenseBase<Derived>& scores) {
  std::vector<std::int32_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int32_t a, std::int32_t b) { return scores(a) > scores(b); });
  return order;
}

Ranking rank(const SimilarityMatrix& sims, int threads = 1);

/// Assemble a Ranking from precomputed per-query orders.
Ranking make_ranking(const std::vector<std::vector<std::int32_t>>& rows);

}  // namespace hubnorm
