#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hubnorm/embeddings.hpp"

namespace hubnorm {

/// Correct gallery indices per query (one or more each).
struct GroundTruth {
  std::vector<std::vector<std::int32_t>> correct;

  Index n_queries() const noexcept { return static_cast<Index>(correct.size()); }
  /// Throws IndexOutOfRange / InvalidParams on a broken invariant.
  void validate(Index n_galleries) const;

  /// Query i matches gallery i.
  static GroundTruth diagonal(Index n);
};

/// How a per-query rank is derived when a query has several correct galleries.
enum class RankPolicy {
  best,               // rank of the best-placed correct gallery
  mean_over_correct,  // mean rank over all correct galleries
};

std::string_view to_string(RankPolicy policy);
RankPolicy parse_rank_policy(std::string_view text);

/// 1-based rank of the correct gallery for every query.
std::vector<double> query_ranks(const Ranking& ranking, const GroundTruth& truth,
                                RankPolicy policy = RankPolicy::best);

/// Percentage of queries with a correct gallery inside the top K, per K.
std::map<Index, double> recall_at_k(const Ranking& ranking, const GroundTruth& truth, const std::vector<Index>& ks);

struct RankStats {
  double mdr = 0.0;  // interpolated median rank
  double mnr = 0.0;  // mean rank
};

RankStats rank_stats(const Ranking& ranking, const GroundTruth& truth, RankPolicy policy = RankPolicy::best);

/// Interpolated median (mean of the two middle values for even sizes).
double median(std::vector<double> values);

struct OccurrenceDistribution {
  std::vector<std::int64_t> counts;  // counts[g] = queries whose top-k contains g
  Index k = 1;

  std::int64_t total() const;
  /// histogram[c] = number of galleries retrieved exactly c times.
  std::vector<std::int64_t> histogram() const;
};

OccurrenceDistribution k_occurrence(const Ranking& ranking, Index k);

/// Population third standardized moment of the occurrence counts.
double skewness(const OccurrenceDistribution& occ);

struct OccurrenceSummary {
  std::int64_t max = 0;
  std::int64_t min = 0;
  double median = 0.0;
};

OccurrenceSummary summarize(const OccurrenceDistribution& occ);

inline constexpr Index kDefaultSkewnessK = 10;

struct RetrievalReport {
  std::string method;
  Index n_queries = 0;
  Index n_galleries = 0;
  std::map<Index, double> r_at;
  double mdr = 0.0;
  double mnr = 0.0;
  Index skewness_k = kDefaultSkewnessK;
  std::optional<double> skewness;  // empty when the distribution is degenerate
  OccurrenceDistribution occurrence;
};

/// Full report: R@{1,5,10}, MdR, MnR and k-occurrence skewness. Skewness k is
/// clamped to the gallery size.
RetrievalReport evaluate_ranking(const Ranking& ranking, const GroundTruth& truth, std::string method,
                                 RankPolicy policy = RankPolicy::best, Index skewness_k = kDefaultSkewnessK);

}  // namespace hubnorm
