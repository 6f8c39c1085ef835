#include "hubnorm/hubsim.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "hubnorm/parallel.hpp"

namespace hubnorm {

namespace {

constexpr Index kTrialsPerChunk = 4096;

constexpr std::uint64_t kPairStream = 1;
constexpr std::uint64_t kProbeXStream = 2;
constexpr std::uint64_t kProbeYStream = 3;
constexpr std::uint64_t kSampleStream = 4;

double draw_scalar(Family family, double scale, Engine& rng) {
  switch (family) {
    case Family::gaussian:
    case Family::projected_gaussian_sphere:
      return scale * boost::random::normal_distribution<double>(0.0, 1.0)(rng);
    case Family::uniform_box:
      return boost::random::uniform_real_distribution<double>(-scale, scale)(rng);
    case Family::laplacian: {
      boost::random::exponential_distribution<double> e(1.0);
      const double a = e(rng);
      return scale * (a - e(rng));
    }
  }
  return 0.0;
}

// E[cos(a)] for the angle law: the characteristic function at 1.
double mean_cos_angle(Family family, double scale) {
  switch (family) {
    case Family::gaussian: return std::exp(-0.5 * scale * scale);
    case Family::uniform_box: return std::sin(scale) / scale;
    case Family::laplacian: return 1.0 / (1.0 + scale * scale);
    case Family::projected_gaussian_sphere: break;
  }
  throw Error(ErrorCode::InvalidParams, "no angle law for projected_gaussian_sphere");
}

struct TrialSums {
  double d = 0.0;
  double a = 0.0;
  double e = 0.0;
  double e2 = 0.0;
};

// One trial writes the observed gap and its closed form for the drawn pair.
struct TrialContext {
  Engine pair_rng;
  Engine probe_x_rng;
  Engine probe_y_rng;
  Vector x1, x2, px, py;
};

template <typename Trial>
TheoremReport run_trials(TheoremId id, const SyntheticDistribution& x_dist, const VerifyOptions& opts,
                         Trial&& trial) {
  if (opts.n_trials < 2) throw Error(ErrorCode::InvalidParams, "need at least two trials");
  const Index n_chunks = (opts.n_trials + kTrialsPerChunk - 1) / kTrialsPerChunk;
  std::vector<TrialSums> chunks(static_cast<std::size_t>(n_chunks));
  parallel_for(n_chunks, opts.threads, [&](Index c) {
    const auto counter = static_cast<std::uint64_t>(c);
    TrialContext ctx{make_engine(opts.seed, kPairStream, counter), make_engine(opts.seed, kProbeXStream, counter),
                     make_engine(opts.seed, kProbeYStream, counter), Vector(x_dist.dim()), Vector(x_dist.dim()),
                     Vector(x_dist.dim()), Vector(x_dist.dim())};
    const Index begin = c * kTrialsPerChunk;
    const Index end = std::min(opts.n_trials, begin + kTrialsPerChunk);
    TrialSums sums;
    for (Index t = begin; t < end; ++t) {
      double d = 0.0;
      double a = 0.0;
      trial(ctx, d, a);
      sums.d += d;
      sums.a += a;
      sums.e += d - a;
      sums.e2 += (d - a) * (d - a);
    }
    chunks[static_cast<std::size_t>(c)] = sums;
  });
  TrialSums total;
  for (const auto& s : chunks) {
    total.d += s.d;
    total.a += s.a;
    total.e += s.e;
    total.e2 += s.e2;
  }
  const auto n = static_cast<double>(opts.n_trials);
  const double var = std::max(0.0, (total.e2 - total.e * total.e / n) / (n - 1.0));
  TheoremReport r;
  r.theorem_id = id;
  r.n_trials = opts.n_trials;
  r.empirical_delta = total.d / n;
  r.analytic_delta = total.a / n;
  r.standard_error = std::sqrt(var / n);
  r.pass = theorem_passes(r.empirical_delta, r.analytic_delta, r.standard_error);
  r.family = std::string(to_string(x_dist.family));
  if (x_dist.support == Support::sphere) r.family += "_sphere";
  r.dim = x_dist.dim();
  r.seed = opts.seed;
  return r;
}

// Fills ctx.x1/x2 with a pair ordered so that `closeness(x1) >= closeness(x2)`
// (reversed under invert_pair).
template <typename Closeness>
void draw_ordered_pair(const SyntheticDistribution& x_dist, const VerifyOptions& opts, TrialContext& ctx,
                       Closeness&& closeness) {
  if (opts.fixed_pair) {
    ctx.x1 = opts.fixed_pair->x1;
    ctx.x2 = opts.fixed_pair->x2;
  } else {
    draw(x_dist, ctx.pair_rng, ctx.x1);
    draw(x_dist, ctx.pair_rng, ctx.x2);
  }
  const bool ordered = closeness(ctx.x1) >= closeness(ctx.x2);
  if (ordered == opts.invert_pair) ctx.x1.swap(ctx.x2);
}

void check_pair(const SyntheticDistribution& x_dist, const VerifyOptions& opts) {
  if (opts.fixed_pair && (opts.fixed_pair->x1.size() != x_dist.dim() || opts.fixed_pair->x2.size() != x_dist.dim())) {
    throw Error(ErrorCode::DimMismatch, "fixed pair dimension differs from the distribution");
  }
}

void check_same_dim(const SyntheticDistribution& x, const SyntheticDistribution& y) {
  if (x.dim() != y.dim()) throw Error(ErrorCode::DimMismatch, "distributions live in different dimensions");
}

enum class ProbeSet { x_only, y_only, both };

TheoremReport verify_l2(TheoremId id, const SyntheticDistribution& x_dist, const SyntheticDistribution& y_dist,
                        ProbeSet probes, const VerifyOptions& opts) {
  x_dist.validate();
  y_dist.validate();
  check_same_dim(x_dist, y_dist);
  check_pair(x_dist, opts);
  const Vector mu = distribution_mean(x_dist);
  return run_trials(id, x_dist, opts, [&](TrialContext& ctx, double& d, double& a) {
    draw_ordered_pair(x_dist, opts, ctx, [&](const Vector& x) { return -(x - mu).squaredNorm(); });
    a = (ctx.x2 - mu).squaredNorm() - (ctx.x1 - mu).squaredNorm();
    const auto gap = [&](const Vector& p) { return (ctx.x2 - p).squaredNorm() - (ctx.x1 - p).squaredNorm(); };
    switch (probes) {
      case ProbeSet::x_only:
        draw(x_dist, ctx.probe_x_rng, ctx.px);
        d = gap(ctx.px);
        break;
      case ProbeSet::y_only:
        draw(y_dist, ctx.probe_y_rng, ctx.py);
        d = gap(ctx.py);
        break;
      case ProbeSet::both:
        draw(x_dist, ctx.probe_x_rng, ctx.px);
        draw(y_dist, ctx.probe_y_rng, ctx.py);
        d = 0.5 * (gap(ctx.px) + gap(ctx.py));
        break;
    }
  });
}

Vector random_unit(Index dim, Engine& rng) {
  boost::random::normal_distribution<double> n01(0.0, 1.0);
  Vector v(dim);
  do {
    for (Index i = 0; i < dim; ++i) v(i) = n01(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::gaussian: return "gaussian";
    case Family::uniform_box: return "uniform_box";
    case Family::laplacian: return "laplacian";
    case Family::projected_gaussian_sphere: return "projected_gaussian_sphere";
  }
  return "gaussian";
}

Family parse_family(std::string_view text) {
  if (text == "gaussian") return Family::gaussian;
  if (text == "uniform_box" || text == "uniform") return Family::uniform_box;
  if (text == "laplacian" || text == "laplace") return Family::laplacian;
  if (text == "projected_gaussian_sphere") return Family::projected_gaussian_sphere;
  throw Error(ErrorCode::InvalidConfig, "unknown distribution family '" + std::string(text) + "'");
}

std::string_view to_string(TheoremId id) {
  switch (id) {
    case TheoremId::T1: return "T1";
    case TheoremId::T2: return "T2";
    case TheoremId::T3: return "T3";
    case TheoremId::C1: return "C1";
  }
  return "T1";
}

void SyntheticDistribution::validate() const {
  if (mean.size() < 1) throw Error(ErrorCode::InvalidParams, "distribution needs dim >= 1");
  if (!mean.allFinite()) throw Error(ErrorCode::InvalidParams, "distribution mean must be finite");
  if (!(std::isfinite(scale) && scale > 0.0)) throw Error(ErrorCode::InvalidParams, "scale must be positive");
  if (family == Family::projected_gaussian_sphere) return;
  if (support == Support::sphere) {
    if (mean.size() < 2) throw Error(ErrorCode::InvalidParams, "sphere support needs dim >= 2");
    if (mean.norm() < 1e-12) throw Error(ErrorCode::InvalidParams, "sphere support needs a mean direction");
    if (!(std::isfinite(radius) && radius > 0.0)) throw Error(ErrorCode::InvalidParams, "radius must be positive");
  }
}

void draw(const SyntheticDistribution& dist, Engine& rng, Eigen::Ref<Vector> out) {
  const Index dim = dist.dim();
  if (dist.family == Family::projected_gaussian_sphere) {
    boost::random::normal_distribution<double> n01(0.0, 1.0);
    do {
      for (Index i = 0; i < dim; ++i) out(i) = dist.mean(i) + n01(rng);
    } while (out.norm() < 1e-300);
    out *= dist.scale / out.norm();
    return;
  }
  if (dist.support == Support::euclidean) {
    for (Index i = 0; i < dim; ++i) out(i) = dist.mean(i) + draw_scalar(dist.family, dist.scale, rng);
    return;
  }
  // `out` first holds the tangent direction so no temporary is needed.
  const double inv_norm2 = 1.0 / dist.mean.squaredNorm();
  const double angle = draw_scalar(dist.family, dist.scale, rng);
  boost::random::normal_distribution<double> n01(0.0, 1.0);
  do {
    for (Index i = 0; i < dim; ++i) out(i) = n01(rng);
    out -= (out.dot(dist.mean) * inv_norm2) * dist.mean;
  } while (out.norm() < 1e-12);
  out *= dist.radius * std::sin(angle) / out.norm();
  out += (dist.radius * std::cos(angle) * std::sqrt(inv_norm2)) * dist.mean;
}

EmbeddingSet sample(const SyntheticDistribution& dist, Index n, std::uint64_t seed) {
  dist.validate();
  if (n < 1) throw Error(ErrorCode::InvalidParams, "sample size must be >= 1");
  Matrix data(n, dist.dim());
  const Index n_chunks = (n + kTrialsPerChunk - 1) / kTrialsPerChunk;
  Vector row(dist.dim());
  for (Index c = 0; c < n_chunks; ++c) {
    Engine rng = make_engine(seed, kSampleStream, static_cast<std::uint64_t>(c));
    for (Index i = c * kTrialsPerChunk; i < std::min(n, (c + 1) * kTrialsPerChunk); ++i) {
      draw(dist, rng, row);
      data.row(i) = row.transpose();
    }
  }
  return EmbeddingSet(std::move(data));
}

double projected_normal_resultant_length(double kappa, Index dim) {
  if (kappa < 0.0 || dim < 1) throw Error(ErrorCode::InvalidParams, "kappa >= 0 and dim >= 1 required");
  if (kappa == 0.0) return 0.0;
  const double d = static_cast<double>(dim);
  const double log_gamma_ratio = std::lgamma(0.5 * (d + 1.0)) - std::lgamma(0.5 * d + 1.0);
  const double z = 0.5 * kappa * kappa;
  // Kummer's transformation absorbs the exp(-z) factor, so large kappa no
  // longer overflows the series.
  const double f = boost::math::hypergeometric_1F1(0.5, 0.5 * d + 1.0, -z);
  return kappa / std::sqrt(2.0) * std::exp(log_gamma_ratio) * f;
}

Vector distribution_mean(const SyntheticDistribution& dist) {
  dist.validate();
  if (dist.family == Family::projected_gaussian_sphere) {
    const double kappa = dist.mean.norm();
    if (kappa == 0.0) return Vector::Zero(dist.dim());
    return dist.scale * projected_normal_resultant_length(kappa, dist.dim()) * dist.mean / kappa;
  }
  if (dist.support == Support::euclidean) return dist.mean;
  return dist.radius * mean_cos_angle(dist.family, dist.scale) * dist.mean.normalized();
}

bool theorem_passes(double empirical, double analytic, double standard_error) {
  return std::abs(empirical - analytic) <= kPassStandardErrors * standard_error && empirical > 0.0;
}

TheoremReport verify_theorem1(const SyntheticDistribution& x_dist, const VerifyOptions& opts) {
  return verify_l2(TheoremId::T1, x_dist, x_dist, ProbeSet::x_only, opts);
}

TheoremReport verify_theorem2(const SyntheticDistribution& x_dist, const SyntheticDistribution& y_dist,
                              const VerifyOptions& opts) {
  return verify_l2(TheoremId::T2, x_dist, y_dist, ProbeSet::y_only, opts);
}

TheoremReport verify_corollary1(const SyntheticDistribution& x_dist, const SyntheticDistribution& y_dist,
                                const VerifyOptions& opts) {
  return verify_l2(TheoremId::C1, x_dist, y_dist, ProbeSet::both, opts);
}

TheoremReport verify_theorem3(const SyntheticDistribution& x_sphere, const SyntheticDistribution& y_sphere,
                              const VerifyOptions& opts) {
  x_sphere.validate();
  y_sphere.validate();
  check_same_dim(x_sphere, y_sphere);
  check_pair(x_sphere, opts);
  if (!x_sphere.on_sphere() || !y_sphere.on_sphere()) {
    throw Error(ErrorCode::InvalidParams, "cosine check needs distributions on a sphere");
  }
  const double r = x_sphere.sphere_radius();
  if (std::abs(r - y_sphere.sphere_radius()) > 1e-12 * r) {
    throw Error(ErrorCode::InvalidParams, "both distributions must share the sphere radius");
  }
  const Vector mu_x = distribution_mean(x_sphere);
  const Vector mu_y = distribution_mean(y_sphere);
  const Vector dir_x = x_sphere.mean.normalized();
  const Vector mu_sum = mu_x + mu_y;
  const double r2 = r * r;
  return run_trials(TheoremId::T3, x_sphere, opts, [&](TrialContext& ctx, double& d, double& a) {
    draw_ordered_pair(x_sphere, opts, ctx, [&](const Vector& x) { return x.dot(dir_x) / x.norm(); });
    a = 0.5 * (ctx.x1.dot(mu_sum) - ctx.x2.dot(mu_sum)) / r2;
    draw(x_sphere, ctx.probe_x_rng, ctx.px);
    draw(y_sphere, ctx.probe_y_rng, ctx.py);
    const auto cos_gap = [&](const Vector& p) {
      const double pn = p.norm();
      return ctx.x1.dot(p) / (ctx.x1.norm() * pn) - ctx.x2.dot(p) / (ctx.x2.norm() * pn);
    };
    d = 0.5 * (cos_gap(ctx.px) + cos_gap(ctx.py));
  });
}

TheoremSetup standard_setup(TheoremId id, Family family, Index dim, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::InvalidParams, "dim must be >= 1");
  Engine rng = make_engine(seed, 20);
  const Vector mu_x = random_unit(dim, rng);
  const Vector mu_y = mu_x + 0.5 * random_unit(dim, rng);
  TheoremSetup s;
  s.x.family = s.y.family = family;
  s.x.mean = mu_x;
  s.y.mean = mu_y;
  if (id == TheoremId::T3 && family != Family::projected_gaussian_sphere) {
    s.x.support = s.y.support = Support::sphere;
    s.x.scale = s.y.scale = 0.5;
  }
  return s;
}

TheoremReport run_theorem(TheoremId id, const TheoremSetup& setup, const VerifyOptions& opts) {
  switch (id) {
    case TheoremId::T1: return verify_theorem1(setup.x, opts);
    case TheoremId::T2: return verify_theorem2(setup.x, setup.y, opts);
    case TheoremId::C1: return verify_corollary1(setup.x, setup.y, opts);
    case TheoremId::T3: return verify_theorem3(setup.x, setup.y, opts);
  }
  throw Error(ErrorCode::InvalidParams, "unknown theorem");
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kDirectionStream = 10;
constexpr std::uint64_t kLatentStream = 11;
constexpr std::uint64_t kQueryNoiseStream = 12;
constexpr std::uint64_t kGalleryNoiseStream = 13;
constexpr std::uint64_t kHubStream = 14;
constexpr std::uint64_t kBankQueryStream = 15;
constexpr std::uint64_t kBankGalleryStream = 16;

Vector perturb(const Vector& base, double amount, Engine& rng) {
  boost::random::normal_distribution<double> n01(0.0, 1.0);
  const double per_coord = amount / std::sqrt(static_cast<double>(base.size()));
  Vector v = base;
  for (Index i = 0; i < v.size(); ++i) v(i) += per_coord * n01(rng);
  return v.normalized();
}

Vector latent(const PlantedHubParams& p, const Vector& direction, Engine& rng) {
  return perturb(direction, p.latent_spread, rng);
}

}  // namespace

PlantedHubFixture planted_hub_benchmark(const PlantedHubParams& p) {
  if (p.n_galleries < 2 || p.n_queries < 1 || p.dim < 2) {
    throw Error(ErrorCode::InvalidParams, "planted hub needs >= 2 galleries, >= 1 query and dim >= 2");
  }
  if (!(p.hub_pull >= 0.0 && p.hub_pull < 1.0)) throw Error(ErrorCode::InvalidParams, "hub_pull must lie in [0, 1)");
  if (!(p.latent_spread > 0.0 && p.modality_noise > 0.0)) {
    throw Error(ErrorCode::InvalidParams, "latent spread and modality noise must be positive");
  }
  Engine dir_rng = make_engine(p.seed, kDirectionStream);
  const Vector direction = random_unit(p.dim, dir_rng);

  Engine latent_rng = make_engine(p.seed, kLatentStream);
  Engine gallery_rng = make_engine(p.seed, kGalleryNoiseStream);
  Engine query_rng = make_engine(p.seed, kQueryNoiseStream);
  std::vector<Vector> latents;
  latents.reserve(static_cast<std::size_t>(p.n_galleries));
  Matrix galleries(p.n_galleries, p.dim);
  for (Index i = 0; i < p.n_galleries; ++i) {
    latents.push_back(latent(p, direction, latent_rng));
    galleries.row(i) = perturb(latents.back(), p.modality_noise, gallery_rng).transpose();
  }
  Matrix queries(p.n_queries, p.dim);
  GroundTruth truth;
  truth.correct.resize(static_cast<std::size_t>(p.n_queries));
  for (Index j = 0; j < p.n_queries; ++j) {
    const Index g = j % p.n_galleries;
    queries.row(j) = perturb(latents[static_cast<std::size_t>(g)], p.modality_noise, query_rng).transpose();
    truth.correct[static_cast<std::size_t>(j)] = {static_cast<std::int32_t>(g)};
  }

  const Vector centroid = galleries.colwise().mean().transpose().normalized();
  Engine hub_rng = make_engine(p.seed, kHubStream);
  const Index hub = boost::random::uniform_int_distribution<Index>(0, p.n_galleries - 1)(hub_rng);
  if (p.hub_pull > 0.0) {
    const Vector g = galleries.row(hub).transpose();
    galleries.row(hub) = (g + p.hub_pull * (centroid - g)).normalized().transpose();
  }

  return PlantedHubFixture{EmbeddingSet(std::move(queries), true), EmbeddingSet(std::move(galleries), true),
                           std::move(truth), hub, direction, centroid, p};
}

PlantedHubFixture planted_hub_benchmark(Index n_queries, Index n_galleries, Index dim, double hub_pull,
                                        std::uint64_t seed) {
  PlantedHubParams p;
  p.n_queries = n_queries;
  p.n_galleries = n_galleries;
  p.dim = dim;
  p.hub_pull = hub_pull;
  p.seed = seed;
  return planted_hub_benchmark(p);
}

BankPair planted_hub_banks(const PlantedHubFixture& fixture, Index n_query_bank, Index n_gallery_bank,
                           std::uint64_t bank_seed) {
  if (n_query_bank < 1 || n_gallery_bank < 1) throw Error(ErrorCode::EmptyBank, "bank sizes must be >= 1");
  const auto& p = fixture.params;
  const auto fill = [&](Index n, std::uint64_t stream) {
    Engine latent_rng = make_engine(bank_seed, stream, 0);
    Engine noise_rng = make_engine(bank_seed, stream, 1);
    Matrix m(n, p.dim);
    for (Index i = 0; i < n; ++i) {
      m.row(i) = perturb(latent(p, fixture.shared_direction, latent_rng), p.modality_noise, noise_rng).transpose();
    }
    return EmbeddingSet(std::move(m), true);
  };
  return {fill(n_query_bank, kBankQueryStream), fill(n_gallery_bank, kBankGalleryStream)};
}

}  // namespace hubnorm
