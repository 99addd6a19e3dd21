#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mapkit/conjugate.hpp"
#include "mapkit/em_fit.hpp"

namespace mapkit {

/// Historical study summaries. The family is the conjugate family of the
/// endpoint (beta: binomial r/n, normal: estimate/se, gamma: poisson
/// count/exposure). Normal rows are stored as NormalData with
/// n = sigma^2 / se^2, so se_j = sigma / sqrt(n_j).
struct StudyDataset {
  MixtureFamily family = MixtureFamily::beta();
  std::vector<std::string> labels;
  std::vector<ObservedData> rows;

  std::size_t size() const { return rows.size(); }
  /// Link of the random-effects model: logit, identity or log.
  Link link() const;
  /// Validates row types and values; messages name the offending row.
  void validate() const;
  /// Standard error of a normal row.
  double standard_error(std::size_t j) const;
};

enum class TauPriorKind { half_normal, truncated_normal, uniform, log_normal };

std::string_view to_string(TauPriorKind kind);
TauPriorKind tau_prior_from_string(std::string_view name);

/// Prior of the between-study standard deviation tau:
///  half_normal(scale), truncated_normal(mean, sd) on [0, inf),
///  uniform(lower, upper), log_normal(meanlog, sdlog).
struct TauPrior {
  TauPriorKind kind = TauPriorKind::half_normal;
  double p1 = 1.0;
  double p2 = 0.0;

  void validate() const;
  /// Log density up to a constant; -inf outside the support.
  double log_density(double tau) const;
  double draw(std::mt19937_64& rng) const;
};

struct HyperPriors {
  double mu_mean = 0.0;  ///< normal prior of the intercept on the link scale
  double mu_sd = 2.0;
  TauPrior tau;

  void validate() const;
};

struct McmcOptions {
  std::size_t chains = 4;
  std::size_t warmup = 1000;
  std::size_t iter = 1000;  ///< kept draws per chain
  std::uint64_t seed = 1;
  /// Run every chain with the same stream (diagnostic use only).
  bool replicate_chains = false;
};

struct ChainDraws {
  std::vector<double> mu;
  std::vector<double> tau;
  std::vector<std::vector<double>> theta;  ///< [study][draw], link scale
  std::vector<double> theta_star;          ///< link scale
  /// Post-warmup acceptance rates: log tau (centred), log tau
  /// (non-centred), then one per study (1 for Gibbs updates).
  std::vector<double> acceptance;
};

struct ParameterDiagnostic {
  std::string name;
  double rhat = 0.0;  ///< split-Rhat, NaN when undefined
  double ess = 0.0;   ///< bulk effective sample size
};

struct McmcDiagnostics {
  std::vector<ParameterDiagnostic> parameters;
  double max_rhat = 0.0;  ///< NaN if any Rhat is undefined
  double min_ess = 0.0;
  std::vector<double> mean_acceptance;
  bool warning = false;
  std::vector<std::string> messages;
};

struct DrawSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

DrawSummary summarize_draws(std::vector<double> draws);

struct MapAnalysis {
  StudyDataset data;
  HyperPriors priors;
  McmcOptions options;
  std::vector<ChainDraws> chains;
  McmcDiagnostics diagnostics;

  Link link() const { return data.link(); }
  /// Pooled draws, chain-major.
  std::vector<double> pooled_mu() const;
  std::vector<double> pooled_tau() const;
  std::vector<double> pooled_theta(std::size_t study) const;  ///< link scale
  std::vector<double> pooled_theta_star() const;              ///< link scale
  std::vector<double> pooled_theta_star_response() const;
};

/// Posterior of the random-effects model and the predictive of a new study
/// effect theta* = mu + tau z by adaptive Metropolis-within-Gibbs.
MapAnalysis gmap(const StudyDataset& data, const HyperPriors& priors, const McmcOptions& options = {});

/// Split-Rhat of a set of equally long chains; NaN when undefined.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Bulk effective sample size from the averaged chain autocorrelations.
double effective_draws(const std::vector<std::vector<double>>& chains);

McmcDiagnostics diagnostics(const MapAnalysis& analysis);

struct ShrinkageRow {
  std::string label;
  double median = 0.0;
  double lower = 0.0;  ///< 2.5% quantile
  double upper = 0.0;  ///< 97.5% quantile
};

/// Per-study response-scale posterior quantiles followed by the "typical"
/// (inverse link of mu) and "MAP" (theta*) rows.
std::vector<ShrinkageRow> shrinkage_estimates(const MapAnalysis& analysis);

/// Response-scale theta* draws of all chains, chain-major, ready for EM.
EmSample map_prior_sample(const MapAnalysis& analysis);

}  // namespace mapkit
