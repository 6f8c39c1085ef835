#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "hubnorm/banks.hpp"
#include "hubnorm/embeddings.hpp"

namespace hubnorm {

enum class Method { none, is, dis, dual_is, dual_dis, gc, csls };
enum class Aggregation { multiply, add };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);
std::string_view to_string(Aggregation aggregation);
Aggregation parse_aggregation(std::string_view text);

struct NormalizationConfig {
  Method method = Method::dual_is;
  double beta1 = 20.0;  // gallery-bank branch temperature
  double beta2 = 20.0;  // query-bank branch temperature
  Aggregation aggregation = Aggregation::multiply;
  Index activation_k = 1;
  Index csls_k = 10;
  /// Gated DualDIS query branch takes the gallery-bank normalized value
  /// instead of the query-bank one. Off by default.
  bool literal_query_branch = false;

  void validate() const;
};

struct BranchFlags {
  bool gallery = false;
  bool query = false;
};

/// Normalized similarities of one query against every test gallery.
///
/// The exact normalized value of entry i is `signs[i] * exp(log_abs[i])`.
/// `values` holds that value multiplied by exp(-log_scale); `log_scale` is 0
/// unless some entry would overflow a double, so in ordinary use `values` are
/// the normalized similarities themselves. Ranking uses `values` and falls
/// back to (sign, log_abs) when underflow makes two entries compare equal.
struct NormalizedRow {
  Vector values;
  Vector log_abs;
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, 1> signs;
  double log_scale = 0.0;
  BranchFlags applied;

  Index size() const noexcept { return values.size(); }
  std::vector<std::int32_t> ranking() const;
};

/// Per-test-gallery log of the softmax denominator sum_j exp(beta * s[i][j]).
/// Depends only on the gallery row and the bank, never on a query.
Vector log_denominators(const SimilarityMatrix& gallery_vs_bank, double beta);

/// Wraps a plain similarity row (raw, GC or CSLS output) as a NormalizedRow.
NormalizedRow plain_row(const Vector& values);

NormalizedRow inverted_softmax(const Vector& q_row, const SimilarityMatrix& gallery_vs_query_bank, double beta2);

NormalizedRow dual_is(const Vector& q_row, const DualBanks& banks, const NormalizationConfig& cfg);

NormalizedRow dual_dis(const Vector& q_row, const DualBanks& banks, const ActivationSet& activation_g,
                       const ActivationSet& activation_q, const NormalizationConfig& cfg);

/// Query-bank-only dynamic inverted softmax: inverted softmax when the raw
/// top-1 lies in `activation_q`, the raw row otherwise.
NormalizedRow dis(const Vector& q_row, const SimilarityMatrix& gallery_vs_query_bank,
                  const ActivationSet& activation_q, const NormalizationConfig& cfg);

/// s[i] minus the 1-based rank of the query among {bank queries} + {query}
/// as seen from gallery i. A query tied with bank entries ranks after them.
NormalizedRow gc_normalize(const Vector& q_row, const SimilarityMatrix& gallery_vs_query_bank);

/// 2 s[i] minus the mean of the query's k best gallery-bank similarities
/// minus the mean of its k best query-bank similarities.
NormalizedRow csls_normalize(const Vector& q_row, const Vector& q_vs_gallery_bank, const Vector& q_vs_query_bank,
                             Index csls_k);

/// Raw top-1 index with ties broken toward the lower index.
Index raw_argmax(const Vector& q_row);

/// Bank-side state shared by all queries: softmax log-denominators, sorted
/// bank columns for GC and both activation sets. Built once, read-only after.
class Normalizer {
 public:
  Normalizer(const DualBanks& banks, const EmbeddingSet& test_galleries, NormalizationConfig cfg);

  /// Normalizes one raw row; `query` is the query embedding (used by CSLS).
  NormalizedRow apply(const Vector& q_row, const Eigen::Ref<const Eigen::RowVectorXd>& query) const;

  /// Raw similarity row followed by apply().
  NormalizedRow normalize_query(const Eigen::Ref<const Eigen::RowVectorXd>& query) const;

  const NormalizationConfig& config() const noexcept { return cfg_; }
  const ActivationSet& activation_g() const noexcept { return activation_g_; }
  const ActivationSet& activation_q() const noexcept { return activation_q_; }
  const Vector& log_denominators_g() const noexcept { return lse_g_; }
  const Vector& log_denominators_q() const noexcept { return lse_q_; }

 private:
  const DualBanks& banks_;
  const EmbeddingSet& galleries_;
  NormalizationConfig cfg_;
  Vector lse_g_;
  Vector lse_q_;
  Matrix sorted_query_bank_;  // each row of gallery_vs_query_bank, ascending
  ActivationSet activation_g_;
  ActivationSet activation_q_;
};

/// Stateless end-to-end path: raw similarities of `query` against `galleries`,
/// then the configured normalizer.
NormalizedRow normalize_query(const Eigen::Ref<const Eigen::RowVectorXd>& query, const EmbeddingSet& galleries,
                              const DualBanks& banks, const ActivationSet& activation_g,
                              const ActivationSet& activation_q, const NormalizationConfig& cfg);

}  // namespace hubnorm
