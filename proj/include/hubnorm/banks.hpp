#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hubnorm/embeddings.hpp"

namespace hubnorm {

enum class BankSource { train, validation, external };

std::string_view to_string(BankSource source);
BankSource parse_bank_source(std::string_view text);

/// How bank rows are drawn when query and gallery training rows are linked
/// (several captions per video or image).
enum class BankSampling {
  independent,  // each bank sampled on its own
  grouped,      // sample gallery rows, keep every query row linked to a kept gallery
};

std::string_view to_string(BankSampling sampling);
BankSampling parse_bank_sampling(std::string_view text);

struct BankPair {
  EmbeddingSet query_bank;
  EmbeddingSet gallery_bank;
};

/// Query bank and gallery bank together with their similarities to the test
/// gallery. Immutable once built; every query reuses the same matrices.
struct DualBanks {
  EmbeddingSet query_bank;
  EmbeddingSet gallery_bank;
  SimilarityMatrix gallery_vs_query_bank;    // N_G x N_Qbank
  SimilarityMatrix gallery_vs_gallery_bank;  // N_G x N_Gbank
  std::uint64_t sampling_seed = 0;
  BankSource source = BankSource::train;

  Index n_test_galleries() const noexcept { return gallery_vs_query_bank.n_queries(); }
  Metric metric() const noexcept { return gallery_vs_query_bank.metric; }
};

/// Which bank produced an activation set.
enum class ActivationOrigin { from_gallery_bank, from_query_bank };

/// Sorted, deduplicated test-gallery indices retrieved in the top k by at
/// least one bank element.
struct ActivationSet {
  std::vector<std::int32_t> gallery_indices;
  Index k = 1;
  ActivationOrigin origin = ActivationOrigin::from_query_bank;

  bool contains(Index gallery) const {
    return std::binary_search(gallery_indices.begin(), gallery_indices.end(), static_cast<std::int32_t>(gallery));
  }
  std::size_t size() const noexcept { return gallery_indices.size(); }
};

/// Sorted row indices of a uniform sample without replacement of
/// round(fraction * n) rows. fraction == 1 returns 0..n-1.
std::vector<Index> sample_rows(Index n, double fraction, std::uint64_t seed);

BankPair build_banks(const EmbeddingSet& train_queries, const EmbeddingSet& train_galleries, double sample_fraction_q,
                     double sample_fraction_g, std::uint64_t seed);

/// Grouped variant: `query_to_gallery[i]` is the training gallery row linked
/// to training query row i. Gallery rows are sampled with `sample_fraction_g`
/// and every query row whose gallery survives is kept.
BankPair build_banks_grouped(const EmbeddingSet& train_queries, const EmbeddingSet& train_galleries,
                             const std::vector<Index>& query_to_gallery, double sample_fraction_g,
                             std::uint64_t seed);

DualBanks precompute_bank_similarities(const BankPair& banks, const EmbeddingSet& test_galleries, Metric metric,
                                       std::uint64_t sampling_seed = 0, BankSource source = BankSource::train,
                                       int threads = 1);

/// Union over bank rows of the top-k test-gallery columns. Accepts any
/// bank-rows x N_G expression, typically `banks.gallery_vs_query_bank.values.transpose()`.
template <typename Derived>
ActivationSet build_activation_set(const Eigen::DenseBase<Derived>& bank_by_gallery, Index k,
                                   ActivationOrigin origin) {
  const Index n_galleries = bank_by_gallery.cols();
  if (k < 1 || k > n_galleries) {
    throw Error(ErrorCode::InvalidK,
                "activation k=" + std::to_string(k) + " outside [1, " + std::to_string(n_galleries) + "]");
  }
  std::vector<char> hit(static_cast<std::size_t>(n_galleries), 0);
  std::vector<std::int32_t> idx(static_cast<std::size_t>(n_galleries));
  for (Index b = 0; b < bank_by_gallery.rows(); ++b) {
    for (Index j = 0; j < n_galleries; ++j) idx[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(j);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::int32_t x, std::int32_t y) {
      const auto sx = bank_by_gallery(b, x);
      const auto sy = bank_by_gallery(b, y);
      return sx > sy || (sx == sy && x < y);
    });
    for (Index t = 0; t < k; ++t) hit[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])] = 1;
  }
  ActivationSet out;
  out.k = k;
  out.origin = origin;
  for (Index j = 0; j < n_galleries; ++j) {
    if (hit[static_cast<std::size_t>(j)]) out.gallery_indices.push_back(static_cast<std::int32_t>(j));
  }
  return out;
}

/// Activation sets for both banks of a precomputed DualBanks.
ActivationSet gallery_bank_activation(const DualBanks& banks, Index k);
ActivationSet query_bank_activation(const DualBanks& banks, Index k);

}  // namespace hubnorm
