#include "mapkit/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

namespace mapkit {

std::string_view to_string(Link link) {
  switch (link) {
    case Link::identity: return "identity";
    case Link::logit: return "logit";
    case Link::log: return "log";
  }
  return "identity";
}

Link link_from_string(std::string_view name) {
  if (name == "identity") return Link::identity;
  if (name == "logit") return Link::logit;
  if (name == "log") return Link::log;
  throw ValidationError("unknown link '" + std::string(name) + "'");
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log1p_exp(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double apply_link(Link link, double x) {
  switch (link) {
    case Link::identity: return x;
    case Link::logit: return logit(x);
    case Link::log: return std::log(x);
  }
  return x;
}

double inverse_link(Link link, double x) {
  switch (link) {
    case Link::identity: return x;
    case Link::logit: return inv_logit(x);
    case Link::log: return std::exp(x);
  }
  return x;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

QuadratureResult integrate(const std::function<double(double)>& f, double lo, double hi,
                           double tolerance, unsigned max_depth) {
  if (!(hi > lo)) return {};
  QuadratureResult result;
  double l1 = 0.0;
  // A single 61-point Kronrod pass with the QUADPACK error
  // rescaling settles most smooth integrands; otherwise bisect adaptively.
  auto accept = [&](double raw_error) {
    if (l1 > 0.0) {
      result.error = l1 * std::min(1.0, std::pow(200.0 * raw_error / l1, 1.5));
      return result.error <= tolerance * l1;
    }
    return raw_error == 0.0;
  };
  double raw_error = 0.0;
  result.value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 0, 0.0,
                                                                                &raw_error, &l1);
  if (accept(raw_error)) return result;
  result.value = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
      f, lo, hi, max_depth, tolerance, &result.error, &l1);
  return result;
}

double find_root(const std::function<double(double)>& f, double lo, double hi, double x_tolerance,
                 double f_tolerance) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo < 0.0) == (fhi < 0.0)) throw NumericalError("find_root: interval does not bracket a root");

  // Wrapping f lets the solver stop as soon as the residual is small enough.
  double hit = std::numeric_limits<double>::quiet_NaN();
  auto g = [&](double x) {
    const double v = f(x);
    if (std::isnan(hit) && std::abs(v) <= f_tolerance) hit = x;
    return std::isnan(hit) ? v : 0.0;
  };
  auto tol = [x_tolerance](double a, double b) { return std::abs(b - a) <= x_tolerance; };
  std::uintmax_t max_iter = 300;
  const auto bracket = boost::math::tools::toms748_solve(g, lo, hi, flo, fhi, tol, max_iter);
  if (!std::isnan(hit)) return hit;
  return 0.5 * (bracket.first + bracket.second);
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double x_tolerance) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (std::abs(b - a) > x_tolerance) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace mapkit
