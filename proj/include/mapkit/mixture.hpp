#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mapkit/numeric.hpp"

namespace mapkit {

enum class Family { normal, beta, gamma };
enum class GammaLikelihood { poisson, exponential };

std::string_view to_string(Family family);
std::string_view to_string(GammaLikelihood likelihood);
Family family_from_string(std::string_view name);
GammaLikelihood likelihood_from_string(std::string_view name);

/// Distributional class of a mixture. Normal mixtures carry the known
/// sampling standard deviation of the outcome, gamma mixtures the likelihood
/// they are meant to be combined with.
class MixtureFamily {
 public:
  static MixtureFamily normal(double sigma);
  static MixtureFamily beta();
  static MixtureFamily gamma(GammaLikelihood likelihood = GammaLikelihood::poisson);

  Family tag() const { return tag_; }
  std::optional<double> sigma() const { return sigma_; }
  std::optional<GammaLikelihood> likelihood() const { return likelihood_; }

  /// Sampling standard deviation; throws unless the family is normal.
  double sampling_sd() const;

  double support_lower() const;
  double support_upper() const;
  bool in_support(double x) const;
  bool in_open_support(double x) const;
  bool link_compatible(Link link) const;

  friend bool operator==(const MixtureFamily&, const MixtureFamily&) = default;

 private:
  explicit MixtureFamily(Family tag) : tag_(tag) {}

  Family tag_;
  std::optional<double> sigma_;
  std::optional<GammaLikelihood> likelihood_;
};

/// One mixture component: weight and the two standard parameters
/// (normal: mean/sd, beta: alpha/beta, gamma: shape/rate).
struct Component {
  double w = 1.0;
  double a = 0.0;
  double b = 0.0;

  friend bool operator==(const Component&, const Component&) = default;
};

/// Per-component distribution functions, shared by the modules that work on
/// individual mixture components.
namespace component {
bool valid(Family family, const Component& c);
double log_pdf(Family family, const Component& c, double x);
double cdf(Family family, const Component& c, double x);
double ccdf(Family family, const Component& c, double x);
double quantile(Family family, const Component& c, double p);
double mean(Family family, const Component& c);
double variance(Family family, const Component& c);
/// First and second derivative of the log density with respect to x.
std::pair<double, double> dlog_pdf(Family family, const Component& c, double x);
double draw(Family family, const Component& c, std::mt19937_64& rng);
/// E[f(X)] for X distributed as the component, by adaptive quadrature over
/// the central 1 - 5e-10 of its mass. Integrable density singularities at the
/// support boundary are removed by a power substitution.
double expectation(Family family, const Component& c, const std::function<double(double)>& f,
                   double tolerance = 1e-11);
}  // namespace component

struct MixtureSummary {
  static constexpr std::array<double, 5> probabilities{0.025, 0.25, 0.5, 0.75, 0.975};

  double mean = 0.0;
  double sd = 0.0;
  std::array<double, 5> quantiles{};
};

/// Finite mixture of conjugate densities. Weights are normalized at
/// construction and the value is immutable afterwards.
class Mixture {
 public:
  Mixture(MixtureFamily family, std::vector<Component> components);

  const MixtureFamily& family() const { return family_; }
  std::span<const Component> components() const { return components_; }
  std::size_t size() const { return components_.size(); }
  const Component& operator[](std::size_t k) const { return components_[k]; }

  double density(double x) const;
  double log_density(double x) const;
  double cdf(double x) const;
  /// Upper tail P(X > x), evaluated without cancellation.
  double ccdf(double x) const;
  double quantile(double p) const;

  std::vector<double> sample(std::size_t n, std::uint64_t seed) const;
  double draw(std::mt19937_64& rng) const;

  double mean() const;
  double variance() const;
  MixtureSummary summarize() const;

  friend bool operator==(const Mixture&, const Mixture&) = default;

 private:
  MixtureFamily family_;
  std::vector<Component> components_;
};

Mixture make_mixture(MixtureFamily family, std::vector<Component> components);

/// Concatenates the components of same-family mixtures, multiplying in the
/// outer weights.
Mixture combine(std::span<const Mixture> mixtures, std::span<const double> weights);

/// How the weakly-informative component of a robust beta mixture is built
/// from its mean m and pseudo sample size n. Gamma and normal components
/// always use the mean/observations mapping of from_mean_n.
enum class VagueConvention {
  mean_n,            ///< Beta(m n, (1 - m) n)
  offset_one,        ///< Beta(m n + 1, (1 - m) n + 1)
  total_n_plus_one,  ///< Beta(m (n + 1), (1 - m) (n + 1)); uniform for m = 1/2, n = 1
};

std::string_view to_string(VagueConvention convention);
VagueConvention vague_convention_from_string(std::string_view name);

/// Convention that reproduces the reference robust operating characteristics of the bundled design.
inline constexpr VagueConvention default_vague_convention = VagueConvention::total_n_plus_one;

/// Unit-information component centred at `mean` carrying `n` observations.
Component vague_component(const MixtureFamily& family, double mean, double n,
                          VagueConvention convention = default_vague_convention);

/// (1 - weight) * mix + weight * vague component.
Mixture robustify(const Mixture& mix, double weight, double mean, double n = 1.0,
                  VagueConvention convention = default_vague_convention);

// Distribution of the difference g(x1) - g(x2) of two independent mixtures of
// the same family on the scale of the link g. Normal mixtures on the identity
// scale are handled exactly, everything else by one-dimensional quadrature.
double diff_cdf(const Mixture& mix1, const Mixture& mix2, double delta, Link link = Link::identity);
double diff_density(const Mixture& mix1, const Mixture& mix2, double delta,
                    Link link = Link::identity);
double diff_quantile(const Mixture& mix1, const Mixture& mix2, double p, Link link = Link::identity);
std::vector<double> diff_sample(const Mixture& mix1, const Mixture& mix2, std::size_t n,
                                std::uint64_t seed, Link link = Link::identity);

namespace detail {
/// Both quadrature routes of diff_cdf, exposed so they can be checked against
/// each other. Route 1 integrates over x2, route 2 over x1.
double diff_cdf_over_second(const Mixture& mix1, const Mixture& mix2, double delta, Link link);
double diff_cdf_over_first(const Mixture& mix1, const Mixture& mix2, double delta, Link link);
}  // namespace detail

}  // namespace mapkit
