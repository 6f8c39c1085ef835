#include "hubnorm/banks.hpp"

#include <cmath>
#include <numeric>

#include <boost/random/uniform_int_distribution.hpp>

#include "hubnorm/parallel.hpp"
#include "hubnorm/random.hpp"

namespace hubnorm {

namespace {
constexpr std::uint64_t kQueryBankStream = 0x51;
constexpr std::uint64_t kGalleryBankStream = 0x47;
}  // namespace

std::string_view to_string(BankSource source) {
  switch (source) {
    case BankSource::train: return "train";
    case BankSource::validation: return "validation";
    case BankSource::external: return "external";
  }
  return "train";
}

BankSource parse_bank_source(std::string_view text) {
  if (text == "train") return BankSource::train;
  if (text == "validation") return BankSource::validation;
  if (text == "external") return BankSource::external;
  throw Error(ErrorCode::InvalidConfig, "unknown bank source '" + std::string(text) + "'");
}

std::string_view to_string(BankSampling sampling) {
  return sampling == BankSampling::independent ? "independent" : "grouped";
}

BankSampling parse_bank_sampling(std::string_view text) {
  if (text == "independent") return BankSampling::independent;
  if (text == "grouped") return BankSampling::grouped;
  throw Error(ErrorCode::InvalidConfig, "unknown bank sampling '" + std::string(text) + "'");
}

std::vector<Index> sample_rows(Index n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidParams, "sample fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  if (keep < 1) throw Error(ErrorCode::EmptyBank, "sampling fraction leaves no rows");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (keep == n) return idx;
  // Partial Fisher-Yates: the first `keep` slots are a uniform sample.
  Engine rng(mix_seed(seed));
  for (Index i = 0; i < keep; ++i) {
    boost::random::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(keep));
  std::sort(idx.begin(), idx.end());
  return idx;
}

BankPair build_banks(const EmbeddingSet& train_queries, const EmbeddingSet& train_galleries, double sample_fraction_q,
                     double sample_fraction_g, std::uint64_t seed) {
  const auto q_rows = sample_rows(train_queries.n_rows(), sample_fraction_q, derive_seed(seed, kQueryBankStream));
  const auto g_rows = sample_rows(train_galleries.n_rows(), sample_fraction_g, derive_seed(seed, kGalleryBankStream));
  return {train_queries.select_rows(q_rows), train_galleries.select_rows(g_rows)};
}

BankPair build_banks_grouped(const EmbeddingSet& train_queries, const EmbeddingSet& train_galleries,
                             const std::vector<Index>& query_to_gallery, double sample_fraction_g,
                             std::uint64_t seed) {
  if (static_cast<Index>(query_to_gallery.size()) != train_queries.n_rows()) {
    throw Error(ErrorCode::ShapeMismatch, "query-to-gallery map must have one entry per training query");
  }
  const auto g_rows = sample_rows(train_galleries.n_rows(), sample_fraction_g, derive_seed(seed, kGalleryBankStream));
  std::vector<char> kept(static_cast<std::size_t>(train_galleries.n_rows()), 0);
  for (Index g : g_rows) kept[static_cast<std::size_t>(g)] = 1;
  std::vector<Index> q_rows;
  for (std::size_t i = 0; i < query_to_gallery.size(); ++i) {
    const Index g = query_to_gallery[i];
    if (g < 0 || g >= train_galleries.n_rows()) {
      throw Error(ErrorCode::IndexOutOfRange, "query " + std::to_string(i) + " links to gallery " + std::to_string(g));
    }
    if (kept[static_cast<std::size_t>(g)]) q_rows.push_back(static_cast<Index>(i));
  }
  if (q_rows.empty()) throw Error(ErrorCode::EmptyBank, "no training query is linked to a sampled gallery");
  return {train_queries.select_rows(q_rows), train_galleries.select_rows(g_rows)};
}

DualBanks precompute_bank_similarities(const BankPair& banks, const EmbeddingSet& test_galleries, Metric metric,
                                       std::uint64_t sampling_seed, BankSource source, int threads) {
  if (banks.query_bank.dim() != test_galleries.dim() || banks.gallery_bank.dim() != test_galleries.dim()) {
    throw Error(ErrorCode::DimMismatch, "bank dim differs from test gallery dim");
  }
  if (metric == Metric::cosine && !test_galleries.normalized()) {
    throw Error(ErrorCode::NotNormalized, "cosine similarity requires unit-normalized test galleries");
  }
  SimilarityMatrix gq{Matrix(test_galleries.n_rows(), banks.query_bank.n_rows()), metric};
  SimilarityMatrix gg{Matrix(test_galleries.n_rows(), banks.gallery_bank.n_rows()), metric};
  parallel_for(test_galleries.n_rows(), threads, [&](Index i) {
    gq.values.row(i) = similarity_row(test_galleries.row(i), banks.query_bank, metric).transpose();
    gg.values.row(i) = similarity_row(test_galleries.row(i), banks.gallery_bank, metric).transpose();
  });
  return DualBanks{banks.query_bank, banks.gallery_bank, std::move(gq), std::move(gg), sampling_seed, source};
}

ActivationSet gallery_bank_activation(const DualBanks& banks, Index k) {
  return build_activation_set(banks.gallery_vs_gallery_bank.values.transpose(), k,
                              ActivationOrigin::from_gallery_bank);
}

ActivationSet query_bank_activation(const DualBanks& banks, Index k) {
  return build_activation_set(banks.gallery_vs_query_bank.values.transpose(), k, ActivationOrigin::from_query_bank);
}

}  // namespace hubnorm
