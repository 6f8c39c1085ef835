#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hubnorm/normalize.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace hubnorm;
using support::error_of;
using support::vec;

namespace {

// Banks given directly by their similarity matrices; the embedding sets are
// placeholders of the right row count.
DualBanks hand_banks(const Matrix& gallery_vs_query_bank, const Matrix& gallery_vs_gallery_bank) {
  return DualBanks{EmbeddingSet(Matrix::Zero(std::max<Index>(1, gallery_vs_query_bank.cols()), 1)),
                   EmbeddingSet(Matrix::Zero(std::max<Index>(1, gallery_vs_gallery_bank.cols()), 1)),
                   {gallery_vs_query_bank, Metric::cosine},
                   {gallery_vs_gallery_bank, Metric::cosine}};
}

NormalizationConfig config(Method method, double beta1 = 20.0, double beta2 = 20.0,
                           Aggregation aggregation = Aggregation::multiply) {
  NormalizationConfig cfg;
  cfg.method = method;
  cfg.beta1 = beta1;
  cfg.beta2 = beta2;
  cfg.aggregation = aggregation;
  return cfg;
}

// The exact normalized value represented by entry i.
double exact(const NormalizedRow& r, Index i) { return r.values(i) * std::exp(r.log_scale); }

}  // namespace

TEST_CASE("inverted softmax by hand") {
  const Matrix bank = support::rows({{0.5, 0.1}, {0.3, 0.3}});
  const Vector s = vec({0.5, 0.2});
  const auto r = inverted_softmax(s, {bank, Metric::cosine}, 1.0);
  CHECK(r.values(0) == doctest::Approx(std::exp(0.5) / (std::exp(0.5) + std::exp(0.1))).epsilon(1e-14));
  CHECK(r.values(1) == doctest::Approx(std::exp(0.2) / (2 * std::exp(0.3))).epsilon(1e-14));
  CHECK(r.log_scale == 0.0);
  CHECK(r.applied.query);
  CHECK_FALSE(r.applied.gallery);
}

TEST_CASE("a bank holding only the query yields ones") {
  const auto q = support::unit_rows(1, 6, 1);
  const auto galleries = support::unit_rows(8, 6, 2);
  const auto banks = precompute_bank_similarities({q, q}, galleries, Metric::cosine);
  const Vector s = similarity_row(q.row(0), galleries, Metric::cosine);
  for (double beta : {0.5, 20.0, 200.0}) {
    const auto is = inverted_softmax(s, banks.gallery_vs_query_bank, beta);
    const auto dual = dual_is(s, banks, config(Method::dual_is, beta, beta));
    for (Index i = 0; i < 8; ++i) {
      CHECK(is.values(i) == doctest::Approx(1.0).epsilon(1e-13));
      CHECK(dual.values(i) == doctest::Approx(1.0).epsilon(1e-13));
    }
  }
}

TEST_CASE("small temperature flattens towards the uniform share") {
  const auto inst = support::random_instance(4, 10, 7, 5, 1, 8, Metric::cosine);
  const Vector s = similarity_row(inst.queries.row(0), inst.galleries, Metric::cosine);
  const auto dual = dual_is(s, inst.banks, config(Method::dual_is, 1e-9, 1e-9));
  const auto sum = dual_is(s, inst.banks, config(Method::dual_is, 1e-9, 1e-9, Aggregation::add));
  for (Index i = 0; i < 10; ++i) {
    CHECK(dual.values(i) == doctest::Approx(1.0 / 35.0).epsilon(1e-7));
    CHECK(sum.values(i) == doctest::Approx(1.0 / 7.0 + 1.0 / 5.0).epsilon(1e-7));
  }
}

TEST_CASE("dual_is matches the long-double reference") {
  for (auto metric : {Metric::cosine, Metric::neg_sq_l2}) {
    for (auto agg : {Aggregation::multiply, Aggregation::add}) {
      const auto inst = support::random_instance(7, 9, 6, 4, 3, 5, metric);
      const auto gq = ref::from_matrix(inst.banks.gallery_vs_query_bank.values);
      const auto gg = ref::from_matrix(inst.banks.gallery_vs_gallery_bank.values);
      for (Index qi = 0; qi < 3; ++qi) {
        const Vector s = similarity_row(inst.queries.row(qi), inst.galleries, metric);
        const auto got = dual_is(s, inst.banks, config(Method::dual_is, 7.0, 13.0, agg));
        const auto want = ref::dual_dis(support::widen(s), gg, gq, 7.0, 13.0, agg, true, true, false);
        for (Index i = 0; i < 9; ++i) CHECK(support::close(exact(got, i), want[static_cast<std::size_t>(i)]));
        CHECK(got.ranking() == ref::order([&] {
                std::vector<ref::Real> v;
                for (const auto& w : want) v.push_back(w.value);
                return v;
              }()));
      }
    }
  }
}

TEST_CASE("denominators do not depend on the query") {
  const auto inst = support::random_instance(2, 12, 8, 8, 6, 4, Metric::cosine);
  const Normalizer is(inst.banks, inst.galleries, config(Method::is, 20.0, 5.0));
  const Vector lse = is.log_denominators_q();
  CHECK(lse.isApprox(log_denominators(inst.banks.gallery_vs_query_bank, 5.0), 1e-15));
  // v_i / exp(beta s_i) is the same for every query.
  Vector first;
  for (Index qi = 0; qi < 6; ++qi) {
    const Vector s = similarity_row(inst.queries.row(qi), inst.galleries, Metric::cosine);
    const auto r = is.apply(s, inst.queries.row(qi));
    const Vector ratio = (r.values.array().log() - 5.0 * s.array()).matrix();
    if (qi == 0) {
      first = ratio;
    } else {
      CHECK((ratio - first).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("shifting every similarity leaves the normalized values unchanged") {
  const auto inst = support::random_instance(5, 10, 6, 6, 1, 4, Metric::neg_sq_l2);
  const Vector s = similarity_row(inst.queries.row(0), inst.galleries, Metric::neg_sq_l2);
  const double c = 3.75;
  const auto shifted = hand_banks((inst.banks.gallery_vs_query_bank.values.array() + c).matrix(),
                                  (inst.banks.gallery_vs_gallery_bank.values.array() + c).matrix());
  for (auto agg : {Aggregation::multiply, Aggregation::add}) {
    const auto cfg = config(Method::dual_is, 4.0, 6.0, agg);
    const auto a = dual_is(s, inst.banks, cfg);
    const auto b = dual_is((s.array() + c).matrix(), shifted, cfg);
    for (Index i = 0; i < 10; ++i) CHECK(std::abs(exact(a, i) - exact(b, i)) <= 1e-9 * std::abs(exact(a, i)));
  }
}

TEST_CASE("gated dual_dis on four galleries") {
  // Bank rows give galleries 0 and 1 the gallery-bank activation, 0 and 2 the
  // query-bank one.
  const Matrix gq = support::rows({{0.9, 0.1}, {0.2, 0.3}, {0.1, 0.8}, {0.0, 0.0}});
  const Matrix gg = support::rows({{0.9, 0.2}, {0.1, 0.7}, {0.0, 0.1}, {0.3, 0.0}});
  const auto banks = hand_banks(gq, gg);
  const auto act_g = gallery_bank_activation(banks, 1);
  const auto act_q = query_bank_activation(banks, 1);
  CHECK(act_g.gallery_indices == std::vector<std::int32_t>{0, 1});
  CHECK(act_q.gallery_indices == std::vector<std::int32_t>{0, 2});

  const auto gq_ref = ref::from_matrix(gq);
  const auto gg_ref = ref::from_matrix(gg);
  struct Case {
    Vector s;
    bool g_open;
    bool q_open;
  };
  const Case cases[] = {
      {vec({0.9, 0.2, 0.1, 0.3}), true, true},    // top-1 is gallery 0
      {vec({0.2, 0.9, 0.1, 0.3}), true, false},   // gallery 1
      {vec({0.2, 0.1, 0.9, 0.3}), false, true},   // gallery 2
      {vec({0.2, 0.1, 0.3, 0.9}), false, false},  // gallery 3
  };
  for (auto agg : {Aggregation::multiply, Aggregation::add}) {
    for (bool literal : {false, true}) {
      auto cfg = config(Method::dual_dis, 3.0, 5.0, agg);
      cfg.literal_query_branch = literal;
      for (const auto& c : cases) {
        const auto got = dual_dis(c.s, banks, act_g, act_q, cfg);
        CHECK(got.applied.gallery == c.g_open);
        CHECK(got.applied.query == c.q_open);
        const auto want = ref::dual_dis(support::widen(c.s), gg_ref, gq_ref, 3.0, 5.0, agg, c.g_open, c.q_open, literal);
        for (Index i = 0; i < 4; ++i) CHECK(support::close(exact(got, i), want[static_cast<std::size_t>(i)]));
      }
    }
  }

  // Both gates closed: s*s or s+s computed exactly, so the raw order survives
  // for positive rows under multiply and for any row under add.
  const Vector closed = cases[3].s;
  const auto mul = dual_dis(closed, banks, act_g, act_q, config(Method::dual_dis, 3.0, 5.0));
  const auto add = dual_dis(closed, banks, act_g, act_q, config(Method::dual_dis, 3.0, 5.0, Aggregation::add));
  for (Index i = 0; i < 4; ++i) {
    CHECK(mul.values(i) == closed(i) * closed(i));
    CHECK(add.values(i) == closed(i) + closed(i));
  }
  CHECK(mul.ranking() == rank_row(closed));
  const Vector mixed = vec({-0.5, -0.1, -0.7, 0.2});
  CHECK(dual_dis(mixed, banks, act_g, act_q, config(Method::dual_dis, 3.0, 5.0, Aggregation::add)).ranking() ==
        rank_row(mixed));
}

TEST_CASE("literal query branch changes only the query term") {
  const auto inst = support::random_instance(8, 10, 5, 7, 1, 4, Metric::cosine);
  const Vector s = similarity_row(inst.queries.row(0), inst.galleries, Metric::cosine);
  const auto all = build_activation_set(Matrix::Ones(1, 10), 10, ActivationOrigin::from_gallery_bank);
  auto cfg = config(Method::dual_dis, 6.0, 9.0);
  const auto plain = dual_dis(s, inst.banks, all, all, cfg);
  CHECK(plain.values.isApprox(dual_is(s, inst.banks, cfg).values, 1e-15));
  cfg.literal_query_branch = true;
  const auto literal = dual_dis(s, inst.banks, all, all, cfg);
  const Vector g = inverted_softmax(s, inst.banks.gallery_vs_gallery_bank, 6.0).values;
  for (Index i = 0; i < 10; ++i) CHECK(literal.values(i) == doctest::Approx(g(i) * g(i)).epsilon(1e-13));
}

TEST_CASE("dis falls back to the raw row outside the activation set") {
  const Matrix gq = support::rows({{0.9, 0.1}, {0.2, 0.3}, {0.1, 0.2}});
  const SimilarityMatrix bank{gq, Metric::cosine};
  const auto act = build_activation_set(gq.transpose(), 1, ActivationOrigin::from_query_bank);
  CHECK(act.gallery_indices == std::vector<std::int32_t>{0, 1});
  const auto cfg = config(Method::dis, 20.0, 2.0);
  const Vector open = vec({0.8, 0.1, 0.3});
  CHECK(dis(open, bank, act, cfg).values.isApprox(inverted_softmax(open, bank, 2.0).values, 1e-15));
  const Vector closed = vec({0.1, 0.2, 0.8});
  const auto r = dis(closed, bank, act, cfg);
  CHECK(r.values == closed);
  CHECK_FALSE(r.applied.query);
}

TEST_CASE("gc examples") {
  const Vector s = vec({0.4, 0.9, -0.2});
  const SimilarityMatrix empty{Matrix(3, 0), Metric::cosine};
  const auto r = gc_normalize(s, empty);
  CHECK(r.values == (s.array() - 1.0).matrix());
  CHECK(r.ranking() == rank_row(s));

  const Matrix bank = support::rows({{0.1, 0.2, 0.3}, {0.95, 0.9, 0.0}, {0.5, 0.6, 0.7}});
  const auto g = gc_normalize(s, {bank, Metric::cosine});
  CHECK(g.values(0) == doctest::Approx(0.4 - 1.0));  // beats every bank entry
  CHECK(g.values(1) == doctest::Approx(0.9 - 3.0));  // tie with 0.9 ranks after it
  CHECK(g.values(2) == doctest::Approx(-0.2 - 4.0));
  const auto want = ref::gc(support::widen(s), ref::from_matrix(bank));
  for (Index i = 0; i < 3; ++i) CHECK(support::close(g.values(i), want[static_cast<std::size_t>(i)]));
}

TEST_CASE("csls examples") {
  const Vector s = vec({0.3, -0.1, 0.6});
  const auto zero = csls_normalize(s, Vector::Zero(4), Vector::Zero(3), 2);
  CHECK(zero.values == (2.0 * s).eval());

  const Vector qg = vec({0.5, 0.1, 0.9, 0.3});
  const Vector qq = vec({0.2, 0.4, 0.0});
  const auto r = csls_normalize(s, qg, qq, 2);
  for (Index i = 0; i < 3; ++i) CHECK(r.values(i) == doctest::Approx(2 * s(i) - 0.7 - 0.3).epsilon(1e-15));
  // Query-constant offsets never reorder.
  CHECK(r.ranking() == rank_row(s));
  const auto full = csls_normalize(s, qg, qq, 3);
  CHECK(full.values(0) == doctest::Approx(0.6 - (0.9 + 0.5 + 0.3) / 3 - 0.6 / 3));
  CHECK(error_of([&] { csls_normalize(s, qg, qq, 4); }) == ErrorCode::KTooLarge);
  CHECK(error_of([&] { csls_normalize(s, qg, qq, 0); }) == ErrorCode::InvalidK);
}

TEST_CASE("method none is the identity") {
  const auto inst = support::random_instance(1, 11, 4, 4, 3, 5, Metric::cosine);
  const Normalizer none(inst.banks, inst.galleries, config(Method::none));
  for (Index qi = 0; qi < 3; ++qi) {
    const Vector s = similarity_row(inst.queries.row(qi), inst.galleries, Metric::cosine);
    const auto r = none.normalize_query(inst.queries.row(qi));
    CHECK(r.values == s);
    CHECK(r.ranking() == rank_row(s));
  }
}

TEST_CASE("Normalizer agrees with the stateless path for every method") {
  for (auto metric : {Metric::cosine, Metric::neg_sq_l2}) {
    const auto inst = support::random_instance(9, 25, 15, 12, 50, 6, metric);
    for (auto method : {Method::none, Method::is, Method::dis, Method::dual_is, Method::dual_dis, Method::gc,
                        Method::csls}) {
      auto cfg = config(method, 10.0, 15.0);
      cfg.activation_k = 2;
      cfg.csls_k = 5;
      const Normalizer n(inst.banks, inst.galleries, cfg);
      const auto act_g = gallery_bank_activation(inst.banks, 2);
      const auto act_q = query_bank_activation(inst.banks, 2);
      for (Index qi = 0; qi < 50; ++qi) {
        const auto a = n.normalize_query(inst.queries.row(qi));
        const auto b = normalize_query(inst.queries.row(qi), inst.galleries, inst.banks, act_g, act_q, cfg);
        CHECK(a.values == b.values);
        CHECK(a.ranking() == b.ranking());
      }
    }
  }
}

TEST_CASE("permuting the gallery permutes the output") {
  const auto inst = support::random_instance(6, 14, 10, 9, 5, 5, Metric::cosine);
  std::vector<Index> perm(14);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[9]);
  const auto galleries = inst.galleries.select_rows(perm);
  const auto banks = precompute_bank_similarities({inst.banks.query_bank, inst.banks.gallery_bank}, galleries,
                                                  Metric::cosine);
  for (auto method : {Method::is, Method::dual_is, Method::dual_dis, Method::gc, Method::csls}) {
    auto cfg = config(method, 10.0, 10.0);
    cfg.csls_k = 3;
    const Normalizer a(inst.banks, inst.galleries, cfg);
    const Normalizer b(banks, galleries, cfg);
    for (Index qi = 0; qi < 5; ++qi) {
      const auto ra = a.normalize_query(inst.queries.row(qi));
      const auto rb = b.normalize_query(inst.queries.row(qi));
      for (Index i = 0; i < 14; ++i) CHECK(rb.values(i) == doctest::Approx(ra.values(perm[i])).epsilon(1e-13));
    }
  }
}

TEST_CASE("large temperatures stay finite and keep the reference order") {
  const auto inst = support::random_instance(3, 30, 20, 20, 4, 8, Metric::cosine);
  const auto gq = ref::from_matrix(inst.banks.gallery_vs_query_bank.values);
  const auto gg = ref::from_matrix(inst.banks.gallery_vs_gallery_bank.values);
  for (double beta : {200.0, 1000.0}) {
    for (Index qi = 0; qi < 4; ++qi) {
      const Vector s = similarity_row(inst.queries.row(qi), inst.galleries, Metric::cosine);
      const auto r = dual_is(s, inst.banks, config(Method::dual_is, beta, beta));
      CHECK(r.values.allFinite());
      CHECK(r.log_abs.allFinite());
      const auto want = ref::dual_dis(support::widen(s), gg, gq, beta, beta, Aggregation::multiply, true, true, false);
      for (Index i = 0; i < 30; ++i) {
        // Relative agreement in log space.
        CHECK(std::abs(r.log_abs(i) - static_cast<double>(std::log(want[static_cast<std::size_t>(i)].value))) < 1e-9);
      }
    }
  }
}

TEST_CASE("invalid parameters are rejected") {
  const auto inst = support::random_instance(0, 6, 4, 4, 1, 3, Metric::cosine);
  const Vector s = similarity_row(inst.queries.row(0), inst.galleries, Metric::cosine);
  for (double beta : {0.0, -1.0, std::numeric_limits<double>::infinity(), std::nan("")}) {
    CHECK(error_of([&] { dual_is(s, inst.banks, config(Method::dual_is, beta, 1.0)); }) == ErrorCode::InvalidParams);
    CHECK(error_of([&] { inverted_softmax(s, inst.banks.gallery_vs_query_bank, beta); }) == ErrorCode::InvalidParams);
  }
  auto cfg = config(Method::dual_dis);
  cfg.activation_k = 0;
  CHECK(error_of([&] { Normalizer(inst.banks, inst.galleries, cfg); }) == ErrorCode::InvalidK);
  cfg.activation_k = 7;
  CHECK(error_of([&] { Normalizer(inst.banks, inst.galleries, cfg); }) == ErrorCode::InvalidK);
  auto csls = config(Method::csls);
  csls.csls_k = 5;
  CHECK(error_of([&] { Normalizer(inst.banks, inst.galleries, csls); }) == ErrorCode::KTooLarge);
  CHECK(error_of([&] { dual_is(vec({0.1, 0.2}), inst.banks, config(Method::dual_is)); }) == ErrorCode::ShapeMismatch);
  CHECK(error_of([&] { Normalizer(inst.banks, inst.queries, config(Method::is)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("method and aggregation names round-trip") {
  for (auto m : {Method::none, Method::is, Method::dis, Method::dual_is, Method::dual_dis, Method::gc, Method::csls})
    CHECK(parse_method(to_string(m)) == m);
  for (auto a : {Aggregation::multiply, Aggregation::add}) CHECK(parse_aggregation(to_string(a)) == a);
  CHECK(error_of([] { parse_method("softmax"); }) == ErrorCode::InvalidConfig);
}
