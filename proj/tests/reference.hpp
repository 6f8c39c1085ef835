#pragma once

// Naive long-double references. Everything here is written as plain loops
// straight from the formulas and shares no code with the library beyond the
// input containers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "hubnorm/embeddings.hpp"
#include "hubnorm/normalize.hpp"

namespace ref {

using Real = long double;
using Table = std::vector<std::vector<Real>>;

inline Table similarities(const hubnorm::Matrix& a, const hubnorm::Matrix& b, hubnorm::Metric metric) {
  Table out(static_cast<std::size_t>(a.rows()), std::vector<Real>(static_cast<std::size_t>(b.rows())));
  for (hubnorm::Index i = 0; i < a.rows(); ++i) {
    for (hubnorm::Index j = 0; j < b.rows(); ++j) {
      Real acc = 0;
      for (hubnorm::Index t = 0; t < a.cols(); ++t) {
        if (metric == hubnorm::Metric::cosine) {
          acc += static_cast<Real>(a(i, t)) * b(j, t);
        } else {
          const Real d = static_cast<Real>(a(i, t)) - b(j, t);
          acc -= d * d;
        }
      }
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
    }
  }
  return out;
}

inline Table from_matrix(const hubnorm::Matrix& m) {
  Table out(static_cast<std::size_t>(m.rows()), std::vector<Real>(static_cast<std::size_t>(m.cols())));
  for (hubnorm::Index i = 0; i < m.rows(); ++i)
    for (hubnorm::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

/// A reference value and the magnitude its rounding error scales with.
struct Value {
  Real value = 0;
  Real scale = 0;
};

/// exp(beta s_i) / sum_j exp(beta bank[i][j]); overflow-prone on purpose but
/// long double reaches e^11356.
inline std::vector<Real> inverted_softmax(const std::vector<Real>& row, const Table& bank, Real beta) {
  std::vector<Real> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    Real denom = 0;
    for (Real b : bank[i]) denom += std::exp(beta * b);
    out[i] = std::exp(beta * row[i]) / denom;
  }
  return out;
}

inline std::size_t argmax(const std::vector<Real>& row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

/// Union over bank rows of the k most similar galleries; bank_by_gallery[b][i].
inline std::vector<bool> activation(const Table& gallery_by_bank, std::size_t k) {
  const std::size_t n_g = gallery_by_bank.size();
  const std::size_t n_b = n_g ? gallery_by_bank[0].size() : 0;
  std::vector<bool> hit(n_g, false);
  for (std::size_t b = 0; b < n_b; ++b) {
    std::vector<bool> taken(n_g, false);
    for (std::size_t t = 0; t < k; ++t) {
      std::size_t best = n_g;
      for (std::size_t i = 0; i < n_g; ++i) {
        if (taken[i]) continue;
        if (best == n_g || gallery_by_bank[i][b] > gallery_by_bank[best][b]) best = i;
      }
      taken[best] = true;
      hit[best] = true;
    }
  }
  return hit;
}

inline Value combine(Real g, Real q, hubnorm::Aggregation agg) {
  if (agg == hubnorm::Aggregation::multiply) return {g * q, std::abs(g * q)};
  return {g + q, std::abs(g) + std::abs(q)};
}

inline std::vector<Value> dual_dis(const std::vector<Real>& row, const Table& gallery_bank_sims,
                                   const Table& query_bank_sims, Real beta1, Real beta2, hubnorm::Aggregation agg,
                                   bool gallery_open, bool query_open, bool literal) {
  const auto ng = inverted_softmax(row, gallery_bank_sims, beta1);
  const auto nq = inverted_softmax(row, query_bank_sims, beta2);
  std::vector<Value> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    const Real g = gallery_open ? ng[i] : row[i];
    const Real q = query_open ? (literal ? ng[i] : nq[i]) : row[i];
    out[i] = combine(g, q, agg);
  }
  return out;
}

inline std::vector<Value> gc(const std::vector<Real>& row, const Table& query_bank_sims) {
  std::vector<Value> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    Real rank = 1;
    for (Real b : query_bank_sims[i])
      if (b >= row[i]) rank += 1;
    out[i] = {row[i] - rank, std::max<Real>(1, std::abs(row[i] - rank))};
  }
  return out;
}

inline Real top_mean(std::vector<Real> v, std::size_t k) {
  std::sort(v.begin(), v.end(), [](Real a, Real b) { return a > b; });
  Real acc = 0;
  for (std::size_t t = 0; t < k; ++t) acc += v[t];
  return acc / static_cast<Real>(k);
}

inline std::vector<Value> csls(const std::vector<Real>& row, const std::vector<Real>& q_vs_gallery_bank,
                               const std::vector<Real>& q_vs_query_bank, std::size_t k) {
  const Real mg = top_mean(q_vs_gallery_bank, k);
  const Real mq = top_mean(q_vs_query_bank, k);
  std::vector<Value> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    const Real v = 2 * row[i] - mg - mq;
    out[i] = {v, std::max<Real>(1, std::abs(2 * row[i]) + std::abs(mg) + std::abs(mq))};
  }
  return out;
}

/// Descending order, ties by lower index.
inline std::vector<std::int32_t> order(const std::vector<Real>& v) {
  std::vector<std::int32_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) { return v[a] > v[b]; });
  return idx;
}

/// Position (1-based) of gallery c by linear scan over the scores.
inline std::int64_t rank_of(const std::vector<Real>& scores, std::size_t c) {
  std::int64_t r = 1;
  for (std::size_t g = 0; g < scores.size(); ++g) {
    if (scores[g] > scores[c] || (scores[g] == scores[c] && g < c)) ++r;
  }
  return r;
}

inline Real skewness(const std::vector<std::int64_t>& counts) {
  const Real n = static_cast<Real>(counts.size());
  Real mean = 0;
  for (auto c : counts) mean += c;
  mean /= n;
  Real m2 = 0, m3 = 0;
  for (auto c : counts) {
    m2 += (c - mean) * (c - mean);
    m3 += (c - mean) * (c - mean) * (c - mean);
  }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, Real(1.5));
}

}  // namespace ref
