#include "mapkit/ess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "mapkit/conjugate.hpp"

namespace mapkit {

namespace bm = boost::math;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_exponential(const MixtureFamily& family) {
  return family.tag() == Family::gamma && family.likelihood() == GammaLikelihood::exponential;
}

// ELIR integrand i(theta) / i_F(theta) is not integrable at zero (and at one
// for beta) when the dominating component there has shape below one.
bool elir_diverges(const Mixture& mix) {
  const Family fam = mix.family().tag();
  if (fam == Family::normal || is_exponential(mix.family())) return false;
  for (const auto& c : mix.components()) {
    if (c.w == 0.0) continue;
    if (c.a < 1.0) return true;
    if (fam == Family::beta && c.b < 1.0) return true;
  }
  return false;
}

double elir_value(const Mixture& mix, double tolerance) {
  const Family fam = mix.family().tag();
  auto ratio = [&](double t) {
    if (!mix.family().in_open_support(t)) return 0.0;
    return prior_information(mix, t) / fisher_information(mix.family(), t);
  };
  double acc = 0.0;
  for (const auto& c : mix.components())
    if (c.w > 0.0) acc += c.w * component::expectation(fam, c, ratio, tolerance);
  return acc;
}

Mixture inflate(const Mixture& mix, double s) {
  std::vector<Component> comps;
  for (const auto& c : mix.components()) {
    if (mix.family().tag() == Family::normal)
      comps.push_back({c.w, c.a, c.b * std::sqrt(s)});
    else
      comps.push_back({c.w, c.a / s, c.b / s});
  }
  return Mixture(mix.family(), std::move(comps));
}

// Posterior of a gamma mixture after m exponential observations summing to t.
Mixture exponential_update(const Mixture& prior, double m, double t) {
  std::vector<Component> comps;
  std::vector<double> log_w;
  for (const auto& c : prior.components()) {
    comps.push_back({0.0, c.a + m, c.b + t});
    log_w.push_back(std::log(c.w) + c.a * std::log(c.b) - bm::lgamma(c.a) + bm::lgamma(c.a + m) -
                    (c.a + m) * std::log(c.b + t));
  }
  const double lse = log_sum_exp(log_w);
  for (std::size_t k = 0; k < comps.size(); ++k) comps[k].w = std::exp(log_w[k] - lse);
  return Mixture(prior.family(), std::move(comps));
}

// Expected information at theta of the epsilon-prior posterior after m
// observations drawn from the prior predictive of `prior`.
double expected_posterior_information(const Mixture& prior, const Mixture& eps, double m,
                                      double theta) {
  if (m <= 0.0) return prior_information(eps, theta);
  const MixtureFamily& family = prior.family();
  switch (family.tag()) {
    case Family::beta: {
      const long n = std::lround(m);
      const auto pred = predictive(prior, double(n));
      double acc = 0.0;
      for (long y = 0; y <= n; ++y) {
        const double p = pred.pmf(double(y));
        if (p == 0.0) continue;
        acc += p * prior_information(posterior_update(eps, BinomialData{y, n}), theta);
      }
      return acc;
    }
    case Family::normal: {
      const auto pred = predictive(prior, m);
      auto info = [&](double y) {
        return prior_information(posterior_update(eps, NormalData{y, m}), theta);
      };
      double acc = 0.0;
      for (const auto& c : pred.components)
        acc += c.w * component::expectation(Family::normal, c, info, 1e-9);
      return acc;
    }
    case Family::gamma: {
      if (is_exponential(family)) {
        // Given theta the total T is Gamma(m, theta); under a Gamma(a, b)
        // prior component T / (b + T) is Beta(m, a).
        double acc = 0.0;
        for (const auto& c : prior.components()) {
          auto info = [&](double u) {
            const double t = c.b * u / (1.0 - u);
            return prior_information(exponential_update(eps, m, t), theta);
          };
          acc += c.w * component::expectation(Family::beta, {1.0, m, c.a}, info, 1e-9);
        }
        return acc;
      }
      const auto pred = predictive(prior, m);
      const long top = long(pred.quantile(1.0 - 1e-10));
      double acc = 0.0;
      double mass = 0.0;
      for (long y = 0; y <= top; ++y) {
        const double p = pred.pmf(double(y));
        mass += p;
        acc += p * prior_information(posterior_update(eps, PoissonData{y, m}), theta);
      }
      return acc / mass;
    }
  }
  return 0.0;
}

EssResult morita(const Mixture& mix, const EssOptions& options) {
  EssResult r;
  r.method = EssMethod::morita;
  r.reference = mixture_mode(mix);
  if (!mix.family().in_open_support(r.reference))
    throw NumericalError("Morita ESS: the prior mode lies on the support boundary");
  r.convention = "reference point: prior mode; epsilon-prior carries 1/" +
                 std::to_string(long(options.morita_inflation)) + " of each component's information";
  const double target = prior_information(mix, r.reference);
  const Mixture eps = inflate(mix, options.morita_inflation);
  auto diff = [&](double m) { return expected_posterior_information(mix, eps, m, r.reference) - target; };

  const bool integer = mix.family().tag() == Family::beta;
  double lo = 0.0;
  double d_lo = diff(0.0);
  if (d_lo >= 0.0) {
    r.value = 0.0;
    return r;
  }
  double hi = 1.0;
  double d_hi = diff(hi);
  while (d_hi < 0.0) {
    lo = hi;
    d_lo = d_hi;
    hi *= 2.0;
    if (hi > 1e7) throw NumericalError("Morita ESS: no sample size up to 1e7 matches the prior information");
    d_hi = diff(hi);
  }
  if (integer) {
    while (hi - lo > 1.0) {
      const double mid = std::floor(0.5 * (lo + hi));
      const double d = diff(mid);
      if (d < 0.0) {
        lo = mid;
        d_lo = d;
      } else {
        hi = mid;
        d_hi = d;
      }
    }
    // Linear interpolation between the two bracketing integers.
    r.value = lo + (-d_lo) / (d_hi - d_lo);
    return r;
  }
  r.value = golden_section_minimize([&](double m) { return std::abs(diff(m)); }, lo, hi,
                                    1e-7 * std::max(1.0, hi));
  return r;
}

}  // namespace

std::string_view to_string(EssMethod method) {
  switch (method) {
    case EssMethod::elir: return "elir";
    case EssMethod::moment: return "moment";
    case EssMethod::morita: return "morita";
  }
  return "elir";
}

EssMethod ess_method_from_string(std::string_view name) {
  if (name == "elir") return EssMethod::elir;
  if (name == "moment") return EssMethod::moment;
  if (name == "morita") return EssMethod::morita;
  throw ValidationError("unknown ESS method '" + std::string(name) + "'");
}

double prior_information(const Mixture& mix, double theta) {
  if (!mix.family().in_open_support(theta))
    throw ValidationError("prior information needs theta inside the open support");
  const Family fam = mix.family().tag();
  const double log_p = mix.log_density(theta);
  // i = (sum r_k l1_k)^2 - sum r_k (l1_k^2 + l2_k), r_k = w_k p_k / p.
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& c : mix.components()) {
    if (c.w == 0.0) continue;
    const double r = std::exp(std::log(c.w) + component::log_pdf(fam, c, theta) - log_p);
    const auto [l1, l2] = component::dlog_pdf(fam, c, theta);
    s1 += r * l1;
    s2 += r * (l1 * l1 + l2);
  }
  return s1 * s1 - s2;
}

double fisher_information(const MixtureFamily& family, double theta) {
  if (!family.in_open_support(theta))
    throw ValidationError("Fisher information needs theta inside the open support");
  switch (family.tag()) {
    case Family::normal: {
      const double s = family.sampling_sd();
      return 1.0 / (s * s);
    }
    case Family::beta: return 1.0 / (theta * (1.0 - theta));
    case Family::gamma:
      return is_exponential(family) ? 1.0 / (theta * theta) : 1.0 / theta;
  }
  return 0.0;
}

double mixture_mode(const Mixture& mix) {
  const Family fam = mix.family().tag();
  double lo = kInf, hi = -kInf;
  for (const auto& c : mix.components()) {
    if (c.w == 0.0) continue;
    lo = std::min(lo, component::quantile(fam, c, 1e-6));
    hi = std::max(hi, component::quantile(fam, c, 1.0 - 1e-6));
  }
  constexpr int kGrid = 512;
  const double step = (hi - lo) / kGrid;
  int best = 0;
  double best_val = -kInf;
  for (int i = 0; i <= kGrid; ++i) {
    const double v = mix.log_density(lo + step * i);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  const double a = std::max(lo, lo + step * (best - 1));
  const double b = std::min(hi, lo + step * (best + 1));
  return golden_section_minimize([&](double x) { return -mix.log_density(x); }, a, b,
                                 1e-10 * std::max(1.0, std::abs(b)));
}

EssResult ess(const Mixture& mix, EssMethod method, const EssOptions& options) {
  const MixtureFamily& family = mix.family();
  EssResult r;
  r.method = method;
  switch (method) {
    case EssMethod::elir: {
      r.convention = "expected local information ratio E[i(theta) / i_F(theta)]";
      if (elir_diverges(mix)) {
        if (options.throw_on_divergence)
          throw NumericalError("ELIR diverges: a component has shape below 1 at a boundary");
        r.value = kInf;
        r.diverged = true;
        return r;
      }
      r.value = elir_value(mix, 1e-10);
      r.quadrature_error = std::abs(r.value - elir_value(mix, 1e-7));
      return r;
    }
    case EssMethod::moment: {
      const double m = mix.mean();
      const double v = mix.variance();
      switch (family.tag()) {
        case Family::beta:
          r.value = m * (1.0 - m) / v - 1.0;
          r.convention = "a + b of the moment-matched beta";
          break;
        case Family::normal: {
          const double s = family.sampling_sd();
          r.value = s * s / v;
          r.convention = "sigma^2 / variance of the moment-matched normal";
          break;
        }
        case Family::gamma:
          if (is_exponential(family)) {
            r.value = m * m / v;
            r.convention = "shape a of the moment-matched gamma (pseudo-events)";
          } else {
            r.value = m / v;
            r.convention = "rate b of the moment-matched gamma (pseudo-exposure)";
          }
          break;
      }
      return r;
    }
    case EssMethod::morita: return morita(mix, options);
  }
  return r;
}

}  // namespace mapkit
