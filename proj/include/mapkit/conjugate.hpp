#pragma once

#include <utility>
#include <variant>
#include <vector>

#include "mapkit/mixture.hpp"

namespace mapkit {

struct BinomialData {
  long r = 0;  ///< responders
  long n = 0;  ///< subjects

  friend bool operator==(const BinomialData&, const BinomialData&) = default;
};

/// Sample mean of n observations with the family's known sampling sd.
struct NormalData {
  double mean = 0.0;
  double n = 1.0;

  /// Converts an (estimate, standard error) pair using n = sigma^2 / se^2.
  static NormalData from_se(double estimate, double se, double sigma);

  friend bool operator==(const NormalData&, const NormalData&) = default;
};

struct PoissonData {
  long count = 0;         ///< total events
  double exposure = 1.0;  ///< total exposure

  friend bool operator==(const PoissonData&, const PoissonData&) = default;
};

using ObservedData = std::variant<BinomialData, NormalData, PoissonData>;

void validate(const ObservedData& data);

/// Standard parameters from a mean and a number of observations.
std::pair<double, double> from_mean_n(const MixtureFamily& family, double mean, double n);
/// Standard parameters from a mean and a standard deviation (moment inversion).
std::pair<double, double> from_mean_sd(const MixtureFamily& family, double mean, double sd);

/// Exact conjugate update of every component; weights are re-weighted by the
/// marginal likelihood of the data under each component.
Mixture posterior_update(const Mixture& prior, const ObservedData& data);

/// Log marginal likelihood of the data under a single component (including
/// normalising constants such as the binomial coefficient).
double log_marginal_likelihood(const MixtureFamily& family, const Component& c,
                               const ObservedData& data);

enum class PredictiveFamily { normal, beta_binomial, negative_binomial };

/// Prior predictive distribution of the data of a future trial.
///  - beta_binomial: (w, alpha, beta) with trial size n
///  - negative_binomial: (w, shape, rate) of the gamma mixing density with exposure n
///  - normal: (w, mean, sd) of the sample mean of n observations
struct PredictiveMixture {
  PredictiveFamily family = PredictiveFamily::normal;
  std::vector<Component> components;
  double n = 1.0;

  bool discrete() const { return family != PredictiveFamily::normal; }
  /// Probability mass (discrete) or density (normal) at y.
  double pmf(double y) const;
  double log_pmf(double y) const;
  /// P(Y <= y).
  double cdf(double y) const;
  double mean() const;
  /// Smallest outcome y with cdf(y) >= p (discrete) or the quantile (normal).
  double quantile(double p) const;

  friend bool operator==(const PredictiveMixture&, const PredictiveMixture&) = default;
};

std::string_view to_string(PredictiveFamily family);
PredictiveFamily predictive_family_from_string(std::string_view name);

PredictiveMixture predictive(const Mixture& prior, double n);

}  // namespace mapkit
