#include "hubnorm/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "hubnorm/softmax.hpp"

namespace hubnorm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// exp() of anything above this is rescaled; leaves headroom for the sum of
// two terms under additive aggregation.
constexpr double kMaxLogValue = 700.0;

// One normalized entry as sign * exp(log). Raw pass-through terms also keep
// the exact double so that ungated rows reproduce raw arithmetic bit for bit.
struct Term {
  std::int8_t sign = 0;
  double log = kNegInf;
  double direct = 0.0;
  bool has_direct = false;
};

Term raw_term(double s) {
  Term t;
  t.sign = static_cast<std::int8_t>((s > 0) - (s < 0));
  t.log = t.sign == 0 ? kNegInf : std::log(std::abs(s));
  t.direct = s;
  t.has_direct = true;
  return t;
}

Term log_term(double log_value) {
  Term t;
  t.sign = 1;
  t.log = log_value;
  return t;
}

Term multiply(const Term& a, const Term& b) {
  Term t;
  t.sign = static_cast<std::int8_t>(a.sign * b.sign);
  t.log = t.sign == 0 ? kNegInf : a.log + b.log;
  t.has_direct = a.has_direct && b.has_direct;
  if (t.has_direct) t.direct = a.direct * b.direct;
  return t;
}

Term add(const Term& a, const Term& b) {
  Term t;
  t.has_direct = a.has_direct && b.has_direct;
  if (t.has_direct) t.direct = a.direct + b.direct;
  if (a.sign == 0 || b.sign == 0) {
    const Term& other = a.sign == 0 ? b : a;
    t.sign = other.sign;
    t.log = other.log;
  } else if (a.sign == b.sign) {
    t.sign = a.sign;
    t.log = logaddexp(a.log, b.log);
  } else if (a.log == b.log) {
    t.sign = 0;
    t.log = kNegInf;
  } else {
    const Term& hi = a.log > b.log ? a : b;
    const Term& lo = a.log > b.log ? b : a;
    t.sign = hi.sign;
    t.log = hi.log + std::log(-std::expm1(lo.log - hi.log));
  }
  return t;
}

Term combine(const Term& g, const Term& q, Aggregation aggregation) {
  return aggregation == Aggregation::multiply ? multiply(g, q) : add(g, q);
}

NormalizedRow finalize(const std::vector<Term>& terms, BranchFlags applied) {
  NormalizedRow out;
  const auto n = static_cast<Index>(terms.size());
  out.values.resize(n);
  out.log_abs.resize(n);
  out.signs.resize(n);
  out.applied = applied;
  double peak = kNegInf;
  for (const Term& t : terms) {
    if (t.sign != 0) peak = std::max(peak, t.log);
  }
  out.log_scale = peak > kMaxLogValue ? peak - kMaxLogValue : 0.0;
  for (Index i = 0; i < n; ++i) {
    const Term& t = terms[static_cast<std::size_t>(i)];
    out.log_abs(i) = t.log;
    out.signs(i) = t.sign;
    if (out.log_scale == 0.0 && t.has_direct) {
      out.values(i) = t.direct;
    } else {
      out.values(i) = t.sign == 0 ? 0.0 : t.sign * std::exp(t.log - out.log_scale);
    }
  }
  return out;
}

void check_row(const Vector& q_row, const SimilarityMatrix& gallery_vs_bank) {
  if (q_row.size() != gallery_vs_bank.n_queries()) {
    throw Error(ErrorCode::ShapeMismatch, "row length " + std::to_string(q_row.size()) + " vs " +
                                              std::to_string(gallery_vs_bank.n_queries()) + " bank-similarity rows");
  }
}

void check_beta(double beta) {
  if (!(std::isfinite(beta) && beta > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "temperature must be finite and positive");
  }
}

// Shared kernels; both the stateless functions and Normalizer go through
// these with identically computed log-denominators.

NormalizedRow is_kernel(const Vector& q_row, const Vector& lse, double beta) {
  std::vector<Term> terms(static_cast<std::size_t>(q_row.size()));
  for (Index i = 0; i < q_row.size(); ++i) terms[static_cast<std::size_t>(i)] = log_term(beta * q_row(i) - lse(i));
  return finalize(terms, {false, true});
}

struct DualInputs {
  const Vector& lse_g;
  const Vector& lse_q;
  double beta1;
  double beta2;
  Aggregation aggregation;
  bool literal_query_branch;
};

NormalizedRow dual_kernel(const Vector& q_row, const DualInputs& in, bool gallery_open, bool query_open) {
  std::vector<Term> terms(static_cast<std::size_t>(q_row.size()));
  for (Index i = 0; i < q_row.size(); ++i) {
    const double s = q_row(i);
    const Term g_norm = log_term(in.beta1 * s - in.lse_g(i));
    const Term g = gallery_open ? g_norm : raw_term(s);
    Term q;
    if (!query_open) {
      q = raw_term(s);
    } else {
      q = in.literal_query_branch ? g_norm : log_term(in.beta2 * s - in.lse_q(i));
    }
    terms[static_cast<std::size_t>(i)] = combine(g, q, in.aggregation);
  }
  return finalize(terms, {gallery_open, query_open});
}

NormalizedRow dis_kernel(const Vector& q_row, const Vector& lse_q, double beta2, const ActivationSet& activation_q) {
  if (activation_q.contains(raw_argmax(q_row))) return is_kernel(q_row, lse_q, beta2);
  return plain_row(q_row);
}

NormalizedRow gc_kernel(const Vector& q_row, const std::function<Index(Index, double)>& bank_at_least) {
  Vector out(q_row.size());
  for (Index i = 0; i < q_row.size(); ++i) {
    const auto rank = static_cast<double>(1 + bank_at_least(i, q_row(i)));
    out(i) = q_row(i) - rank;
  }
  return plain_row(out);
}

double top_k_mean(const Vector& sims, Index k) {
  std::vector<double> v(sims.data(), sims.data() + sims.size());
  std::partial_sort(v.begin(), v.begin() + k, v.end(), std::greater<>());
  double acc = 0.0;
  for (Index t = 0; t < k; ++t) acc += v[static_cast<std::size_t>(t)];
  return acc / static_cast<double>(k);
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::none: return "none";
    case Method::is: return "is";
    case Method::dis: return "dis";
    case Method::dual_is: return "dual_is";
    case Method::dual_dis: return "dual_dis";
    case Method::gc: return "gc";
    case Method::csls: return "csls";
  }
  return "none";
}

Method parse_method(std::string_view text) {
  if (text == "none") return Method::none;
  if (text == "is") return Method::is;
  if (text == "dis") return Method::dis;
  if (text == "dual_is" || text == "dualis") return Method::dual_is;
  if (text == "dual_dis" || text == "dualdis") return Method::dual_dis;
  if (text == "gc") return Method::gc;
  if (text == "csls") return Method::csls;
  throw Error(ErrorCode::InvalidConfig, "unknown method '" + std::string(text) + "'");
}

std::string_view to_string(Aggregation aggregation) {
  return aggregation == Aggregation::multiply ? "multiply" : "add";
}

Aggregation parse_aggregation(std::string_view text) {
  if (text == "multiply" || text == "mul") return Aggregation::multiply;
  if (text == "add") return Aggregation::add;
  throw Error(ErrorCode::InvalidConfig, "unknown aggregation '" + std::string(text) + "'");
}

void NormalizationConfig::validate() const {
  check_beta(beta1);
  check_beta(beta2);
  if (activation_k < 1) throw Error(ErrorCode::InvalidK, "activation_k must be >= 1");
  if (csls_k < 1) throw Error(ErrorCode::InvalidK, "csls_k must be >= 1");
}

std::vector<std::int32_t> NormalizedRow::ranking() const {
  std::vector<std::int32_t> order(static_cast<std::size_t>(size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
  std::stable_sort(order.begin(), order.end(), [this](std::int32_t a, std::int32_t b) {
    if (values(a) != values(b)) return values(a) > values(b);
    if (signs(a) != signs(b)) return signs(a) > signs(b);
    if (signs(a) > 0) return log_abs(a) > log_abs(b);
    if (signs(a) < 0) return log_abs(a) < log_abs(b);
    return false;
  });
  return order;
}

Vector log_denominators(const SimilarityMatrix& gallery_vs_bank, double beta) {
  check_beta(beta);
  return rowwise_logsumexp(gallery_vs_bank.values, beta);
}

NormalizedRow plain_row(const Vector& values) {
  std::vector<Term> terms(static_cast<std::size_t>(values.size()));
  for (Index i = 0; i < values.size(); ++i) terms[static_cast<std::size_t>(i)] = raw_term(values(i));
  return finalize(terms, {false, false});
}

Index raw_argmax(const Vector& q_row) {
  Index best = 0;
  for (Index i = 1; i < q_row.size(); ++i) {
    if (q_row(i) > q_row(best)) best = i;
  }
  return best;
}

NormalizedRow inverted_softmax(const Vector& q_row, const SimilarityMatrix& gallery_vs_query_bank, double beta2) {
  check_row(q_row, gallery_vs_query_bank);
  return is_kernel(q_row, log_denominators(gallery_vs_query_bank, beta2), beta2);
}

NormalizedRow dual_is(const Vector& q_row, const DualBanks& banks, const NormalizationConfig& cfg) {
  cfg.validate();
  check_row(q_row, banks.gallery_vs_query_bank);
  check_row(q_row, banks.gallery_vs_gallery_bank);
  const Vector lse_g = log_denominators(banks.gallery_vs_gallery_bank, cfg.beta1);
  const Vector lse_q = log_denominators(banks.gallery_vs_query_bank, cfg.beta2);
  return dual_kernel(q_row, {lse_g, lse_q, cfg.beta1, cfg.beta2, cfg.aggregation, false}, true, true);
}

NormalizedRow dual_dis(const Vector& q_row, const DualBanks& banks, const ActivationSet& activation_g,
                       const ActivationSet& activation_q, const NormalizationConfig& cfg) {
  cfg.validate();
  check_row(q_row, banks.gallery_vs_query_bank);
  check_row(q_row, banks.gallery_vs_gallery_bank);
  const Vector lse_g = log_denominators(banks.gallery_vs_gallery_bank, cfg.beta1);
  const Vector lse_q = log_denominators(banks.gallery_vs_query_bank, cfg.beta2);
  const Index top = raw_argmax(q_row);
  return dual_kernel(q_row, {lse_g, lse_q, cfg.beta1, cfg.beta2, cfg.aggregation, cfg.literal_query_branch},
                     activation_g.contains(top), activation_q.contains(top));
}

NormalizedRow dis(const Vector& q_row, const SimilarityMatrix& gallery_vs_query_bank,
                  const ActivationSet& activation_q, const NormalizationConfig& cfg) {
  cfg.validate();
  check_row(q_row, gallery_vs_query_bank);
  return dis_kernel(q_row, log_denominators(gallery_vs_query_bank, cfg.beta2), cfg.beta2, activation_q);
}

NormalizedRow gc_normalize(const Vector& q_row, const SimilarityMatrix& gallery_vs_query_bank) {
  check_row(q_row, gallery_vs_query_bank);
  const Matrix& bank = gallery_vs_query_bank.values;
  return gc_kernel(q_row, [&bank](Index i, double s) { return static_cast<Index>((bank.row(i).array() >= s).count()); });
}

NormalizedRow csls_normalize(const Vector& q_row, const Vector& q_vs_gallery_bank, const Vector& q_vs_query_bank,
                             Index csls_k) {
  if (csls_k < 1) throw Error(ErrorCode::InvalidK, "csls_k must be >= 1");
  if (csls_k > q_vs_gallery_bank.size() || csls_k > q_vs_query_bank.size()) {
    throw Error(ErrorCode::KTooLarge, "csls_k=" + std::to_string(csls_k) + " exceeds a bank size");
  }
  const double mean_g = top_k_mean(q_vs_gallery_bank, csls_k);
  const double mean_q = top_k_mean(q_vs_query_bank, csls_k);
  Vector out(q_row.size());
  for (Index i = 0; i < q_row.size(); ++i) out(i) = 2.0 * q_row(i) - mean_g - mean_q;
  return plain_row(out);
}

Normalizer::Normalizer(const DualBanks& banks, const EmbeddingSet& test_galleries, NormalizationConfig cfg)
    : banks_(banks), galleries_(test_galleries), cfg_(cfg) {
  cfg_.validate();
  if (test_galleries.n_rows() != banks.n_test_galleries()) {
    throw Error(ErrorCode::ShapeMismatch, "banks were precomputed for a different test gallery");
  }
  switch (cfg_.method) {
    case Method::is:
      lse_q_ = log_denominators(banks.gallery_vs_query_bank, cfg_.beta2);
      break;
    case Method::dis:
      lse_q_ = log_denominators(banks.gallery_vs_query_bank, cfg_.beta2);
      activation_q_ = query_bank_activation(banks, cfg_.activation_k);
      break;
    case Method::dual_dis:
      activation_g_ = gallery_bank_activation(banks, cfg_.activation_k);
      activation_q_ = query_bank_activation(banks, cfg_.activation_k);
      [[fallthrough]];
    case Method::dual_is:
      lse_g_ = log_denominators(banks.gallery_vs_gallery_bank, cfg_.beta1);
      lse_q_ = log_denominators(banks.gallery_vs_query_bank, cfg_.beta2);
      break;
    case Method::gc:
      sorted_query_bank_ = banks.gallery_vs_query_bank.values;
      for (Index i = 0; i < sorted_query_bank_.rows(); ++i) {
        auto row = sorted_query_bank_.row(i);
        std::sort(row.begin(), row.end());
      }
      break;
    case Method::csls:
      if (cfg_.csls_k > banks.query_bank.n_rows() || cfg_.csls_k > banks.gallery_bank.n_rows()) {
        throw Error(ErrorCode::KTooLarge, "csls_k=" + std::to_string(cfg_.csls_k) + " exceeds a bank size");
      }
      break;
    case Method::none:
      break;
  }
}

NormalizedRow Normalizer::apply(const Vector& q_row, const Eigen::Ref<const Eigen::RowVectorXd>& query) const {
  check_row(q_row, banks_.gallery_vs_query_bank);
  switch (cfg_.method) {
    case Method::none:
      return plain_row(q_row);
    case Method::is:
      return is_kernel(q_row, lse_q_, cfg_.beta2);
    case Method::dis:
      return dis_kernel(q_row, lse_q_, cfg_.beta2, activation_q_);
    case Method::dual_is:
      return dual_kernel(q_row, {lse_g_, lse_q_, cfg_.beta1, cfg_.beta2, cfg_.aggregation, false}, true, true);
    case Method::dual_dis: {
      const Index top = raw_argmax(q_row);
      return dual_kernel(q_row,
                         {lse_g_, lse_q_, cfg_.beta1, cfg_.beta2, cfg_.aggregation, cfg_.literal_query_branch},
                         activation_g_.contains(top), activation_q_.contains(top));
    }
    case Method::gc:
      return gc_kernel(q_row, [this](Index i, double s) {
        const auto row = sorted_query_bank_.row(i);
        return static_cast<Index>(row.end() - std::lower_bound(row.begin(), row.end(), s));
      });
    case Method::csls:
      return csls_normalize(q_row, similarity_row(query, banks_.gallery_bank, banks_.metric()),
                            similarity_row(query, banks_.query_bank, banks_.metric()), cfg_.csls_k);
  }
  return plain_row(q_row);
}

NormalizedRow Normalizer::normalize_query(const Eigen::Ref<const Eigen::RowVectorXd>& query) const {
  return apply(similarity_row(query, galleries_, banks_.metric()), query);
}

NormalizedRow normalize_query(const Eigen::Ref<const Eigen::RowVectorXd>& query, const EmbeddingSet& galleries,
                              const DualBanks& banks, const ActivationSet& activation_g,
                              const ActivationSet& activation_q, const NormalizationConfig& cfg) {
  const Vector row = similarity_row(query, galleries, banks.metric());
  switch (cfg.method) {
    case Method::none: return plain_row(row);
    case Method::is: cfg.validate(); return inverted_softmax(row, banks.gallery_vs_query_bank, cfg.beta2);
    case Method::dis: return dis(row, banks.gallery_vs_query_bank, activation_q, cfg);
    case Method::dual_is: return dual_is(row, banks, cfg);
    case Method::dual_dis: return dual_dis(row, banks, activation_g, activation_q, cfg);
    case Method::gc: return gc_normalize(row, banks.gallery_vs_query_bank);
    case Method::csls:
      return csls_normalize(row, similarity_row(query, banks.gallery_bank, banks.metric()),
                            similarity_row(query, banks.query_bank, banks.metric()), cfg.csls_k);
  }
  return plain_row(row);
}

}  // namespace hubnorm
