#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "hubnorm/banks.hpp"
#include "hubnorm/embeddings.hpp"
#include "hubnorm/metrics.hpp"
#include "hubnorm/random.hpp"

namespace hubnorm {

enum class Family { gaussian, uniform_box, laplacian, projected_gaussian_sphere };

/// Where samples live. On the sphere, gaussian / uniform_box / laplacian
/// describe the geodesic angle from the mean direction instead of a
/// per-coordinate offset.
enum class Support { euclidean, sphere };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

/// A distribution symmetric about its mean.
///
/// euclidean support: mean + iid noise per coordinate with the family's law
/// and `scale` (std-dev, half-width, or Laplace diversity).
///
/// sphere support: points `radius * (cos(a) m + sin(a) u)` with m = mean
/// direction, u uniform among unit vectors orthogonal to m, and angle a drawn
/// from the family with `scale`. The exact mean is radius * E[cos a] * m.
///
/// projected_gaussian_sphere: N(mean, I) pushed radially onto the sphere of
/// radius `scale`; |mean| sets the concentration.
struct SyntheticDistribution {
  Family family = Family::gaussian;
  Vector mean;
  double scale = 1.0;
  Support support = Support::euclidean;
  double radius = 1.0;

  Index dim() const noexcept { return mean.size(); }
  bool on_sphere() const noexcept { return family == Family::projected_gaussian_sphere || support == Support::sphere; }
  double sphere_radius() const noexcept { return family == Family::projected_gaussian_sphere ? scale : radius; }
  void validate() const;
};

/// Draws one point; the per-call engine makes chunked generation reproducible.
void draw(const SyntheticDistribution& dist, Engine& rng, Eigen::Ref<Vector> out);

EmbeddingSet sample(const SyntheticDistribution& dist, Index n, std::uint64_t seed);

/// Exact mean vector of the distribution.
Vector distribution_mean(const SyntheticDistribution& dist);

/// Mean resultant length E|x/|x|| projected on the mean direction for
/// x ~ N(mu, I) in `dim` dimensions with |mu| = kappa.
double projected_normal_resultant_length(double kappa, Index dim);

enum class TheoremId { T1, T2, T3, C1 };

std::string_view to_string(TheoremId id);

/// Outcome of one Monte-Carlo check of an expected-distance gap.
///
/// Each trial draws an ordered pair (x1 nearer the mean than x2) and one or
/// more probe points, and records the observed gap `d` together with its
/// closed form `a` for that pair. `empirical_delta` = mean(d),
/// `analytic_delta` = mean(a) (exactly the closed form for a fixed pair) and
/// `standard_error` is the standard error of mean(d - a).
struct TheoremReport {
  TheoremId theorem_id = TheoremId::T1;
  Index n_trials = 0;
  double empirical_delta = 0.0;
  double analytic_delta = 0.0;
  double standard_error = 0.0;
  bool pass = false;
  std::string family;
  Index dim = 0;
  std::uint64_t seed = 0;
};

inline constexpr double kPassStandardErrors = 4.0;

/// pass <=> |empirical - analytic| <= 4 SE and empirical > 0.
bool theorem_passes(double empirical, double analytic, double standard_error);

struct PointPair {
  Vector x1;
  Vector x2;
};

struct VerifyOptions {
  Index n_trials = 100000;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Use this pair in every trial instead of drawing a new one. The order is
  /// still fixed up so that x1 is nearer the mean.
  std::optional<PointPair> fixed_pair;
  /// Negative control: order pairs the wrong way round.
  bool invert_pair = false;
};

/// E|x2 - x|^2 - E|x1 - x|^2 over x ~ X, against |x2 - mu|^2 - |x1 - mu|^2.
TheoremReport verify_theorem1(const SyntheticDistribution& x_dist, const VerifyOptions& opts);

/// Same gap with probes y ~ Y; the closed form involves only mu_x.
TheoremReport verify_theorem2(const SyntheticDistribution& x_dist, const SyntheticDistribution& y_dist,
                              const VerifyOptions& opts);

/// Per trial, the gap averaged over one probe from X and one from Y.
TheoremReport verify_corollary1(const SyntheticDistribution& x_dist, const SyntheticDistribution& y_dist,
                                const VerifyOptions& opts);

/// Cosine version on a common sphere: E[cos(x1, p) - cos(x2, p)] averaged
/// over a probe from X and one from Y, against (x1 - x2) . mean(p) / r^2.
TheoremReport verify_theorem3(const SyntheticDistribution& x_sphere, const SyntheticDistribution& y_sphere,
                              const VerifyOptions& opts);

/// The X / Y pair the simulate command uses at one grid point. The X mean is
/// a random unit vector and the Y mean sits 0.5 away from it; T3 puts both on
/// the unit sphere with angular scale 0.5.
struct TheoremSetup {
  SyntheticDistribution x;
  SyntheticDistribution y;
};

TheoremSetup standard_setup(TheoremId id, Family family, Index dim, std::uint64_t seed);

TheoremReport run_theorem(TheoremId id, const TheoremSetup& setup, const VerifyOptions& opts);

// ---------------------------------------------------------------------------
// Planted-hub benchmark

struct PlantedHubParams {
  Index n_queries = 200;
  Index n_galleries = 200;
  Index dim = 32;
  double hub_pull = 0.9;
  std::uint64_t seed = 0;
  double latent_spread = 0.8;  // spread of item latents around the shared direction
  double modality_noise = 0.6;  // per-modality perturbation of each latent
};

struct PlantedHubFixture {
  EmbeddingSet queries;
  EmbeddingSet galleries;
  GroundTruth truth;
  Index hub_index = 0;
  Vector shared_direction;    // direction the latents scatter around
  Vector centroid_direction;  // normalized mean of the unplanted galleries
  PlantedHubParams params;
};

/// Matched query/gallery pairs on the unit sphere around a shared direction;
/// gallery `hub_index` is then pulled toward the gallery centroid by
/// `hub_pull` and renormalized. Query i matches gallery i mod n_galleries.
PlantedHubFixture planted_hub_benchmark(const PlantedHubParams& params);

PlantedHubFixture planted_hub_benchmark(Index n_queries, Index n_galleries, Index dim, double hub_pull,
                                        std::uint64_t seed);

/// Fresh query and gallery banks from the fixture's generative process
/// (independent latents, no planted hub).
BankPair planted_hub_banks(const PlantedHubFixture& fixture, Index n_query_bank, Index n_gallery_bank,
                           std::uint64_t bank_seed);

}  // namespace hubnorm
