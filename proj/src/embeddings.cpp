#include "hubnorm/embeddings.hpp"

#include <cmath>
#include <string>

#include "hubnorm/parallel.hpp"

namespace hubnorm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

std::string_view to_string(Metric metric) {
  return metric == Metric::cosine ? "cosine" : "neg_sq_l2";
}

Metric parse_metric(std::string_view text) {
  if (text == "cosine") return Metric::cosine;
  if (text == "neg_sq_l2" || text == "l2") return Metric::neg_sq_l2;
  throw Error(ErrorCode::InvalidConfig, "unknown metric '" + std::string(text) + "'");
}

EmbeddingSet::EmbeddingSet(Matrix data, bool normalized) : data_(std::move(data)), normalized_(normalized) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw Error(ErrorCode::ShapeMismatch, "embedding set needs at least one row and one column");
  }
  if (!data_.allFinite()) throw Error(ErrorCode::NonFinite, "embedding set contains NaN or Inf");
  if (normalized_) {
    for (Index i = 0; i < data_.rows(); ++i) {
      if (std::abs(data_.row(i).norm() - 1.0) > kUnitNormTolerance) {
        throw Error(ErrorCode::NotNormalized, "row " + std::to_string(i) + " is flagged normalized but not unit-norm");
      }
    }
  }
}

EmbeddingSet EmbeddingSet::select_rows(const std::vector<Index>& indices) const {
  Matrix out(static_cast<Index>(indices.size()), dim());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= n_rows()) {
      throw Error(ErrorCode::IndexOutOfRange, "row index " + std::to_string(indices[k]));
    }
    out.row(static_cast<Index>(k)) = data_.row(indices[k]);
  }
  return EmbeddingSet(std::move(out), normalized_);
}

EmbeddingSet l2_normalize_rows(const EmbeddingSet& e) {
  Matrix out = e.data();
  for (Index i = 0; i < out.rows(); ++i) {
    // stableNorm avoids squaring tiny entries into zero before the check.
    const double n = out.row(i).stableNorm();
    if (!(n >= kZeroNormTolerance)) {
      throw Error(ErrorCode::ZeroNormRow, "row " + std::to_string(i) + " has norm below tolerance");
    }
    out.row(i) /= n;
  }
  return EmbeddingSet(std::move(out), true);
}

namespace {

void check_cosine_inputs(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (!a.normalized() || !b.normalized()) {
    throw Error(ErrorCode::NotNormalized, "cosine similarity requires unit-normalized inputs");
  }
}

// Single kernel used for every similarity row so batch and per-query paths
// agree bitwise.
void fill_row(const Eigen::RowVectorXd& q, const Matrix& g, Metric metric, Eigen::Ref<Eigen::RowVectorXd> out) {
  if (metric == Metric::cosine) {
    for (Index j = 0; j < g.rows(); ++j) out(j) = g.row(j).dot(q);
  } else {
    for (Index j = 0; j < g.rows(); ++j) out(j) = -(g.row(j) - q).squaredNorm();
  }
}

}  // namespace

SimilarityMatrix similarity(const EmbeddingSet& queries, const EmbeddingSet& galleries, Metric metric) {
  if (queries.dim() != galleries.dim()) {
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(queries.dim()) + " vs gallery dim " +
                                            std::to_string(galleries.dim()));
  }
  if (metric == Metric::cosine) check_cosine_inputs(queries, galleries);
  SimilarityMatrix out{Matrix(queries.n_rows(), galleries.n_rows()), metric};
  Eigen::RowVectorXd q(queries.dim());
  for (Index i = 0; i < queries.n_rows(); ++i) {
    q = queries.row(i);
    fill_row(q, galleries.data(), metric, out.values.row(i));
  }
  return out;
}

Vector similarity_row(const Eigen::Ref<const Eigen::RowVectorXd>& query, const EmbeddingSet& galleries,
                      Metric metric) {
  if (query.size() != galleries.dim()) throw Error(ErrorCode::DimMismatch, "query length differs from gallery dim");
  if (metric == Metric::cosine && !galleries.normalized()) {
    throw Error(ErrorCode::NotNormalized, "cosine similarity requires unit-normalized galleries");
  }
  const Eigen::RowVectorXd q = query;
  Eigen::RowVectorXd out(galleries.n_rows());
  fill_row(q, galleries.data(), metric, out);
  return out.transpose();
}

Ranking make_ranking(const std::vector<std::vector<std::int32_t>>& rows) {
  Ranking r;
  const Index cols = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  r.order.resize(static_cast<Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Index>(rows[i].size()) != cols) throw Error(ErrorCode::ShapeMismatch, "ragged ranking rows");
    for (Index j = 0; j < cols; ++j) r.order(static_cast<Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return r;
}

Ranking rank(const SimilarityMatrix& sims, int threads) {
  Ranking r;
  r.order.resize(sims.n_queries(), sims.n_galleries());
  parallel_for(sims.n_queries(), threads, [&](Index i) {
    const auto order = rank_row(sims.values.row(i));
    for (Index j = 0; j < sims.n_galleries(); ++j) r.order(i, j) = order[static_cast<std::size_t>(j)];
  });
  return r;
}

}  // namespace hubnorm
