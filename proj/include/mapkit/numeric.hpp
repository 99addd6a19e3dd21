#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mapkit {

/// Invalid user input: bad parameters, malformed files, incompatible families.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Link { identity, logit, log };

std::string_view to_string(Link link);
Link link_from_string(std::string_view name);

double apply_link(Link link, double x);
double inverse_link(Link link, double x);

double logit(double p);
double inv_logit(double x);

/// log(1 + exp(x)) without overflow.
double log1p_exp(double x);

double log_sum_exp(std::span<const double> values);

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

/// Adaptive Gauss-Kronrod (21 point) quadrature on a finite interval.
/// `tolerance` is relative to the L1 norm of the integrand.
QuadratureResult integrate(const std::function<double(double)>& f, double lo, double hi,
                           double tolerance = 1e-11, unsigned max_depth = 18);

/// Root of a function with a sign change on [lo, hi] by TOMS 748, refined to
/// `x_tolerance` (absolute) or until |f| <= `f_tolerance`.
double find_root(const std::function<double(double)>& f, double lo, double hi,
                 double x_tolerance = 1e-12, double f_tolerance = 0.0);

/// Minimizer of a unimodal function on [lo, hi] by golden-section search.
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double x_tolerance = 1e-8);

}  // namespace mapkit
