#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mapkit/mixture.hpp"

namespace mapkit {

/// Draws to be approximated by a parametric mixture, checked against the
/// support of the target family. Beta values on the closed unit interval are
/// clamped into [1e-8, 1 - 1e-8]; the number of clamped points is recorded.
struct EmSample {
  std::vector<double> values;
  std::size_t clamped = 0;
};

EmSample make_em_sample(std::vector<double> values, const MixtureFamily& family);

struct EmOptions {
  std::size_t max_iter = 1000;
  /// Converged once the log-likelihood moved less than `abs_tol` in each of
  /// `window` consecutive iterations, or by less than `rel_tol` relative.
  double abs_tol = 1e-6;
  std::size_t window = 10;
  double rel_tol = 1e-9;
  /// Keep the per-iteration log-likelihood trace in the result.
  bool keep_trace = true;
};

struct EmFitResult {
  Mixture mixture;
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// N_k of the final M-step; the mixture weights equal N_k / N.
  std::vector<double> counts;
  double aic = 0.0;
  std::vector<double> trace;
  std::vector<std::string> warnings;
};

/// 1-D k-means with k-means++ seeding, followed by a moment match of every
/// cluster. Weights are the cluster fractions.
std::vector<Component> knn_init(const EmSample& sample, const MixtureFamily& family, std::size_t k,
                                std::uint64_t seed);

/// Expectation-maximization fit of a K-component mixture. Normal mixtures are
/// started from a Student-t (4 degrees of freedom) fit. Components that
/// collapse are dropped and the fit is repeated with one component less.
EmFitResult em_fit(const EmSample& sample, const MixtureFamily& family, std::size_t k,
                   std::uint64_t seed, const EmOptions& options = {});

/// EM started from the given components instead of the k-means solution.
EmFitResult em_fit_from(const EmSample& sample, const MixtureFamily& family,
                        std::vector<Component> init, const EmOptions& options = {});

/// Fits K = 1..k_max and returns the fit with the lowest AIC (ties go to the
/// smaller K).
EmFitResult auto_fit(const EmSample& sample, const MixtureFamily& family, std::size_t k_max,
                     std::uint64_t seed, const EmOptions& options = {});

double loglik(const Mixture& mix, std::span<const double> values);

/// Number of free parameters of a K-component mixture.
inline std::size_t free_parameters(std::size_t k) { return 3 * k - 1; }

namespace detail {
/// Beta maximum-likelihood parameters from E[log y] and E[log(1 - y)],
/// Newton iterations on the log parameters started at (a0, b0).
std::pair<double, double> beta_mstep(double mean_log, double mean_log1m, double a0, double b0);
/// Gamma maximum-likelihood (shape, rate) from E[y] and E[log y].
std::pair<double, double> gamma_mstep(double mean, double mean_log);
}  // namespace detail

}  // namespace mapkit
