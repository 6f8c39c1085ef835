#include "hubnorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hubnorm {

void GroundTruth::validate(Index n_galleries) const {
  for (std::size_t q = 0; q < correct.size(); ++q) {
    if (correct[q].empty()) throw Error(ErrorCode::InvalidParams, "query " + std::to_string(q) + " has no correct gallery");
    for (auto g : correct[q]) {
      if (g < 0 || g >= n_galleries) {
        throw Error(ErrorCode::IndexOutOfRange, "query " + std::to_string(q) + " references gallery " +
                                                    std::to_string(g) + " of " + std::to_string(n_galleries));
      }
    }
  }
}

GroundTruth GroundTruth::diagonal(Index n) {
  GroundTruth t;
  t.correct.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) t.correct[static_cast<std::size_t>(i)] = {static_cast<std::int32_t>(i)};
  return t;
}

std::string_view to_string(RankPolicy policy) {
  return policy == RankPolicy::best ? "best" : "mean_over_correct";
}

RankPolicy parse_rank_policy(std::string_view text) {
  if (text == "best") return RankPolicy::best;
  if (text == "mean_over_correct" || text == "mean") return RankPolicy::mean_over_correct;
  throw Error(ErrorCode::InvalidConfig, "unknown rank policy '" + std::string(text) + "'");
}

namespace {

void check_shapes(const Ranking& ranking, const GroundTruth& truth) {
  if (ranking.n_queries() != truth.n_queries()) {
    throw Error(ErrorCode::ShapeMismatch, "ranking has " + std::to_string(ranking.n_queries()) +
                                              " queries, ground truth " + std::to_string(truth.n_queries()));
  }
  truth.validate(ranking.n_galleries());
}

}  // namespace

std::vector<double> query_ranks(const Ranking& ranking, const GroundTruth& truth, RankPolicy policy) {
  check_shapes(ranking, truth);
  std::vector<double> ranks(static_cast<std::size_t>(ranking.n_queries()));
  std::vector<std::int32_t> position(static_cast<std::size_t>(ranking.n_galleries()));
  for (Index q = 0; q < ranking.n_queries(); ++q) {
    for (Index p = 0; p < ranking.n_galleries(); ++p) position[static_cast<std::size_t>(ranking.order(q, p))] = static_cast<std::int32_t>(p);
    const auto& correct = truth.correct[static_cast<std::size_t>(q)];
    if (policy == RankPolicy::best) {
      std::int32_t best = std::numeric_limits<std::int32_t>::max();
      for (auto g : correct) best = std::min(best, position[static_cast<std::size_t>(g)]);
      ranks[static_cast<std::size_t>(q)] = best + 1.0;
    } else {
      double acc = 0.0;
      for (auto g : correct) acc += position[static_cast<std::size_t>(g)] + 1.0;
      ranks[static_cast<std::size_t>(q)] = acc / static_cast<double>(correct.size());
    }
  }
  return ranks;
}

std::map<Index, double> recall_at_k(const Ranking& ranking, const GroundTruth& truth, const std::vector<Index>& ks) {
  const auto ranks = query_ranks(ranking, truth, RankPolicy::best);
  std::map<Index, double> out;
  for (Index k : ks) {
    if (k < 1) throw Error(ErrorCode::InvalidK, "recall K must be >= 1");
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](double r) { return r <= static_cast<double>(k); });
    out[k] = ranks.empty() ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidParams, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

RankStats rank_stats(const Ranking& ranking, const GroundTruth& truth, RankPolicy policy) {
  const auto ranks = query_ranks(ranking, truth, policy);
  if (ranks.empty()) throw Error(ErrorCode::InvalidParams, "rank statistics need at least one query");
  double acc = 0.0;
  for (double r : ranks) acc += r;
  return {median(ranks), acc / static_cast<double>(ranks.size())};
}

std::int64_t OccurrenceDistribution::total() const {
  std::int64_t acc = 0;
  for (auto c : counts) acc += c;
  return acc;
}

std::vector<std::int64_t> OccurrenceDistribution::histogram() const {
  const auto top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  std::vector<std::int64_t> hist(static_cast<std::size_t>(top) + 1, 0);
  for (auto c : counts) ++hist[static_cast<std::size_t>(c)];
  return hist;
}

OccurrenceDistribution k_occurrence(const Ranking& ranking, Index k) {
  if (k < 1 || k > ranking.n_galleries()) {
    throw Error(ErrorCode::InvalidK, "k-occurrence k=" + std::to_string(k) + " outside [1, " +
                                         std::to_string(ranking.n_galleries()) + "]");
  }
  OccurrenceDistribution occ;
  occ.k = k;
  occ.counts.assign(static_cast<std::size_t>(ranking.n_galleries()), 0);
  for (Index q = 0; q < ranking.n_queries(); ++q) {
    for (Index p = 0; p < k; ++p) ++occ.counts[static_cast<std::size_t>(ranking.order(q, p))];
  }
  return occ;
}

double skewness(const OccurrenceDistribution& occ) {
  const auto n = static_cast<double>(occ.counts.size());
  if (occ.counts.empty()) throw Error(ErrorCode::DegenerateDistribution, "empty occurrence distribution");
  double mean = 0.0;
  for (auto c : occ.counts) mean += static_cast<double>(c);
  mean /= n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (auto c : occ.counts) {
    const double d = static_cast<double>(c) - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) throw Error(ErrorCode::DegenerateDistribution, "all occurrence counts are equal");
  return m3 / (m2 * std::sqrt(m2));
}

OccurrenceSummary summarize(const OccurrenceDistribution& occ) {
  if (occ.counts.empty()) throw Error(ErrorCode::InvalidParams, "empty occurrence distribution");
  std::vector<double> as_real(occ.counts.begin(), occ.counts.end());
  const auto [lo, hi] = std::minmax_element(occ.counts.begin(), occ.counts.end());
  return {*hi, *lo, median(std::move(as_real))};
}

RetrievalReport evaluate_ranking(const Ranking& ranking, const GroundTruth& truth, std::string method,
                                 RankPolicy policy, Index skewness_k) {
  RetrievalReport report;
  report.method = std::move(method);
  report.n_queries = ranking.n_queries();
  report.n_galleries = ranking.n_galleries();
  report.r_at = recall_at_k(ranking, truth, {1, 5, 10});
  const auto stats = rank_stats(ranking, truth, policy);
  report.mdr = stats.mdr;
  report.mnr = stats.mnr;
  report.skewness_k = std::min(skewness_k, ranking.n_galleries());
  report.occurrence = k_occurrence(ranking, report.skewness_k);
  try {
    report.skewness = skewness(report.occurrence);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateDistribution) throw;
  }
  return report;
}

}  // namespace hubnorm
