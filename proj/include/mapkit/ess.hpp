#pragma once

#include <string>
#include <string_view>

#include "mapkit/mixture.hpp"

namespace mapkit {

enum class EssMethod { elir, moment, morita };

std::string_view to_string(EssMethod method);
EssMethod ess_method_from_string(std::string_view name);

/// Prior information -d^2/dtheta^2 log p(theta) of the mixture, from the
/// per-component log-density derivatives. Throws outside the open support.
double prior_information(const Mixture& mix, double theta);

/// Fisher information of a single observation of the sampling model that
/// the family is conjugate to: normal 1/sigma^2, binomial (n = 1)
/// 1/(theta (1 - theta)), poisson 1/theta, exponential 1/theta^2.
double fisher_information(const MixtureFamily& family, double theta);

struct EssOptions {
  /// Throw instead of returning +inf when the ELIR integral diverges.
  bool throw_on_divergence = false;
  /// Each component of the Morita epsilon-prior carries 1/inflation of the
  /// information of the corresponding prior component.
  double morita_inflation = 1000.0;
};

struct EssResult {
  EssMethod method = EssMethod::elir;
  double value = 0.0;
  /// The ELIR integral does not exist (a component has a < 1 or b < 1 at a
  /// boundary where the information ratio is not integrable).
  bool diverged = false;
  double quadrature_error = 0.0;
  /// Morita reference point (prior mode).
  double reference = 0.0;
  std::string convention;
};

EssResult ess(const Mixture& mix, EssMethod method = EssMethod::elir, const EssOptions& options = {});

/// Global mode of the mixture density, by a grid over the central quantiles
/// refined with golden-section search.
double mixture_mode(const Mixture& mix);

}  // namespace mapkit
