#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "hubnorm/banks.hpp"
#include "hubnorm/hubsim.hpp"
#include "hubnorm/normalize.hpp"
#include "reference.hpp"

namespace support {

using namespace hubnorm;

inline Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed) {
  SyntheticDistribution d;
  d.mean = Vector::Zero(cols);
  return sample(d, rows, seed).data();
}

inline EmbeddingSet unit_rows(Index rows, Index cols, std::uint64_t seed) {
  return l2_normalize_rows(EmbeddingSet(gaussian_matrix(rows, cols, seed)));
}

inline Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Index>(values.size()), static_cast<Index>(values.begin()->size()));
  Index i = 0;
  for (const auto& r : values) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

/// Code of the hubnorm::Error thrown by f, or nullopt when nothing is thrown.
template <typename F>
std::optional<ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline std::vector<ref::Real> widen(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// |actual - expected| <= tol * scale, with scale from the reference.
inline bool close(double actual, const ref::Value& expected, long double tol = 1e-12L) {
  return std::abs(static_cast<long double>(actual) - expected.value) <= tol * expected.scale;
}

/// A random retrieval instance with both banks precomputed.
struct Instance {
  EmbeddingSet galleries;
  EmbeddingSet queries;
  DualBanks banks;
};

inline Instance random_instance(std::uint64_t seed, Index n_g, Index n_qb, Index n_gb, Index n_q, Index dim,
                                Metric metric) {
  auto make = [&](Index n, std::uint64_t s) {
    return metric == Metric::cosine ? unit_rows(n, dim, s) : EmbeddingSet(gaussian_matrix(n, dim, s));
  };
  EmbeddingSet galleries = make(n_g, seed * 7 + 1);
  EmbeddingSet queries = make(n_q, seed * 7 + 2);
  BankPair pair{make(n_qb, seed * 7 + 3), make(n_gb, seed * 7 + 4)};
  DualBanks banks = precompute_bank_similarities(pair, galleries, metric, seed);
  return {std::move(galleries), std::move(queries), std::move(banks)};
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "hubnorm-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace support
