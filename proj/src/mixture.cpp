#include "mapkit/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mapkit/conjugate.hpp"

namespace mapkit {

namespace bm = boost::math;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_beta_fn(double a, double b) { return bm::lgamma(a) + bm::lgamma(b) - bm::lgamma(a + b); }

// Log density of a beta/gamma component at a boundary point where one of the
// power terms degenerates: +inf for shape < 1, the limit for shape == 1.
double boundary_log_pdf(double shape, double log_limit) {
  if (shape < 1.0) return kInf;
  if (shape == 1.0) return log_limit;
  return -kInf;
}
}  // namespace

std::string_view to_string(Family family) {
  switch (family) {
    case Family::normal: return "normal";
    case Family::beta: return "beta";
    case Family::gamma: return "gamma";
  }
  return "normal";
}

std::string_view to_string(GammaLikelihood likelihood) {
  return likelihood == GammaLikelihood::poisson ? "poisson" : "exponential";
}

Family family_from_string(std::string_view name) {
  if (name == "normal") return Family::normal;
  if (name == "beta") return Family::beta;
  if (name == "gamma") return Family::gamma;
  throw ValidationError("unknown mixture family '" + std::string(name) + "'");
}

GammaLikelihood likelihood_from_string(std::string_view name) {
  if (name == "poisson") return GammaLikelihood::poisson;
  if (name == "exponential") return GammaLikelihood::exponential;
  throw ValidationError("unknown gamma likelihood '" + std::string(name) + "'");
}

std::string_view to_string(VagueConvention convention) {
  switch (convention) {
    case VagueConvention::mean_n: return "mean_n";
    case VagueConvention::offset_one: return "offset_one";
    case VagueConvention::total_n_plus_one: return "total_n_plus_one";
  }
  return "total_n_plus_one";
}

VagueConvention vague_convention_from_string(std::string_view name) {
  if (name == "mean_n") return VagueConvention::mean_n;
  if (name == "offset_one") return VagueConvention::offset_one;
  if (name == "total_n_plus_one") return VagueConvention::total_n_plus_one;
  throw ValidationError("unknown robust component convention '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// MixtureFamily

MixtureFamily MixtureFamily::normal(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ValidationError("normal family requires a positive sampling sd");
  MixtureFamily f(Family::normal);
  f.sigma_ = sigma;
  return f;
}

MixtureFamily MixtureFamily::beta() { return MixtureFamily(Family::beta); }

MixtureFamily MixtureFamily::gamma(GammaLikelihood likelihood) {
  MixtureFamily f(Family::gamma);
  f.likelihood_ = likelihood;
  return f;
}

double MixtureFamily::sampling_sd() const {
  if (!sigma_) throw ValidationError("sampling sd is only defined for the normal family");
  return *sigma_;
}

double MixtureFamily::support_lower() const { return tag_ == Family::normal ? -kInf : 0.0; }
double MixtureFamily::support_upper() const { return tag_ == Family::beta ? 1.0 : kInf; }

bool MixtureFamily::in_support(double x) const {
  return x >= support_lower() && x <= support_upper() && !std::isnan(x);
}

bool MixtureFamily::in_open_support(double x) const {
  return x > support_lower() && x < support_upper();
}

bool MixtureFamily::link_compatible(Link link) const {
  switch (link) {
    case Link::identity: return true;
    case Link::logit: return tag_ == Family::beta;
    case Link::log: return tag_ != Family::normal;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Components

namespace component {

bool valid(Family family, const Component& c) {
  if (!std::isfinite(c.a) || !std::isfinite(c.b)) return false;
  switch (family) {
    case Family::normal: return c.b > 0.0;
    case Family::beta:
    case Family::gamma: return c.a > 0.0 && c.b > 0.0;
  }
  return false;
}

double log_pdf(Family family, const Component& c, double x) {
  switch (family) {
    case Family::normal: {
      const double z = (x - c.a) / c.b;
      return -0.5 * z * z - std::log(c.b) - kLogSqrt2Pi;
    }
    case Family::beta: {
      if (x < 0.0 || x > 1.0 || std::isnan(x)) return -kInf;
      const double lb = log_beta_fn(c.a, c.b);
      if (x == 0.0) return boundary_log_pdf(c.a, -lb);
      if (x == 1.0) return boundary_log_pdf(c.b, -lb);
      return (c.a - 1.0) * std::log(x) + (c.b - 1.0) * std::log1p(-x) - lb;
    }
    case Family::gamma: {
      if (x < 0.0 || std::isnan(x)) return -kInf;
      if (x == 0.0) return boundary_log_pdf(c.a, std::log(c.b));
      if (std::isinf(x)) return -kInf;
      return c.a * std::log(c.b) - bm::lgamma(c.a) + (c.a - 1.0) * std::log(x) - c.b * x;
    }
  }
  return -kInf;
}

double cdf(Family family, const Component& c, double x) {
  switch (family) {
    case Family::normal: return 0.5 * bm::erfc(-(x - c.a) / (c.b * std::numbers::sqrt2));
    case Family::beta:
      if (x <= 0.0) return 0.0;
      if (x >= 1.0) return 1.0;
      return bm::ibeta(c.a, c.b, x);
    case Family::gamma:
      if (x <= 0.0) return 0.0;
      if (std::isinf(x)) return 1.0;
      return bm::gamma_p(c.a, c.b * x);
  }
  return 0.0;
}

double ccdf(Family family, const Component& c, double x) {
  switch (family) {
    case Family::normal: return 0.5 * bm::erfc((x - c.a) / (c.b * std::numbers::sqrt2));
    case Family::beta:
      if (x <= 0.0) return 1.0;
      if (x >= 1.0) return 0.0;
      return bm::ibetac(c.a, c.b, x);
    case Family::gamma:
      if (x <= 0.0) return 1.0;
      if (std::isinf(x)) return 0.0;
      return bm::gamma_q(c.a, c.b * x);
  }
  return 0.0;
}

double quantile(Family family, const Component& c, double p) {
  if (p <= 0.0) return family == Family::normal ? -kInf : 0.0;
  if (p >= 1.0) return family == Family::beta ? 1.0 : kInf;
  switch (family) {
    case Family::normal: return c.a - c.b * std::numbers::sqrt2 * bm::erfc_inv(2.0 * p);
    case Family::beta: return bm::ibeta_inv(c.a, c.b, p);
    case Family::gamma: return bm::gamma_p_inv(c.a, p) / c.b;
  }
  return 0.0;
}

double mean(Family family, const Component& c) {
  switch (family) {
    case Family::normal: return c.a;
    case Family::beta: return c.a / (c.a + c.b);
    case Family::gamma: return c.a / c.b;
  }
  return 0.0;
}

double variance(Family family, const Component& c) {
  switch (family) {
    case Family::normal: return c.b * c.b;
    case Family::beta: {
      const double s = c.a + c.b;
      return c.a * c.b / (s * s * (s + 1.0));
    }
    case Family::gamma: return c.a / (c.b * c.b);
  }
  return 0.0;
}

std::pair<double, double> dlog_pdf(Family family, const Component& c, double x) {
  switch (family) {
    case Family::normal: {
      const double prec = 1.0 / (c.b * c.b);
      return {-(x - c.a) * prec, -prec};
    }
    case Family::beta:
      return {(c.a - 1.0) / x - (c.b - 1.0) / (1.0 - x),
              -(c.a - 1.0) / (x * x) - (c.b - 1.0) / ((1.0 - x) * (1.0 - x))};
    case Family::gamma: return {(c.a - 1.0) / x - c.b, -(c.a - 1.0) / (x * x)};
  }
  return {0.0, 0.0};
}

double draw(Family family, const Component& c, std::mt19937_64& rng) {
  switch (family) {
    case Family::normal: return std::normal_distribution<double>(c.a, c.b)(rng);
    case Family::beta: {
      const double x = std::gamma_distribution<double>(c.a, 1.0)(rng);
      const double y = std::gamma_distribution<double>(c.b, 1.0)(rng);
      if (x + y == 0.0) return c.a >= c.b ? 1.0 : 0.0;
      return x / (x + y);
    }
    case Family::gamma: return std::gamma_distribution<double>(c.a, 1.0 / c.b)(rng);
  }
  return 0.0;
}


double expectation(Family family, const Component& c, const std::function<double(double)>& f,
                   double tolerance) {
  constexpr double kTail = 2.5e-10;
  if (family == Family::normal) {
    const double z = std::numbers::sqrt2 * bm::erfc_inv(2.0 * kTail);
    auto integrand = [&](double t) { return std::exp(log_pdf(family, c, t)) * f(t); };
    return integrate(integrand, c.a - z * c.b, c.a, tolerance).value +
           integrate(integrand, c.a, c.a + z * c.b, tolerance).value;
  }

  const double lb = family == Family::beta ? log_beta_fn(c.a, c.b) : 0.0;
  const double lo = c.a < 1.0 ? 0.0 : quantile(family, c, kTail);
  const double hi = (family == Family::beta && c.b < 1.0) ? 1.0 : quantile(family, c, 1.0 - kTail);
  const double mid = std::clamp(mean(family, c), lo, hi);
  auto plain = [&](double t) { return std::exp(log_pdf(family, c, t)) * f(t); };
  const bool upper_singular = family == Family::beta && c.b < 1.0;
  if (c.a >= 1.0 && !upper_singular) return integrate(plain, lo, hi, tolerance).value;

  double total = 0.0;
  if (c.a < 1.0) {
    // t = mid * s^(1/a) cancels the t^(a-1) singularity at zero.
    const double log_mid = std::log(mid);
    auto lower = [&](double s) {
      const double t = mid * std::pow(s, 1.0 / c.a);
      double log_rest = c.a * log_mid - std::log(c.a);
      if (family == Family::beta)
        log_rest += (c.b - 1.0) * std::log1p(-t) - lb;
      else
        log_rest += c.a * std::log(c.b) - bm::lgamma(c.a) - c.b * t;
      return std::exp(log_rest) * f(t);
    };
    total += integrate(lower, 0.0, 1.0, tolerance).value;
  } else {
    total += integrate(plain, lo, mid, tolerance).value;
  }
  if (upper_singular) {
    // t = 1 - (1 - mid) * s^(1/b) for the (1 - t)^(b-1) singularity at one.
    const double log_rmid = std::log1p(-mid);
    auto upper = [&](double s) {
      const double t = 1.0 - (1.0 - mid) * std::pow(s, 1.0 / c.b);
      const double log_rest = c.b * log_rmid - std::log(c.b) + (c.a - 1.0) * std::log(t) - lb;
      return std::exp(log_rest) * f(t);
    };
    total += integrate(upper, 0.0, 1.0, tolerance).value;
  } else {
    total += integrate(plain, mid, hi, tolerance).value;
  }
  return total;
}

}  // namespace component

// ---------------------------------------------------------------------------
// Mixture

Mixture::Mixture(MixtureFamily family, std::vector<Component> components)
    : family_(std::move(family)), components_(std::move(components)) {
  if (components_.empty()) throw ValidationError("a mixture needs at least one component");
  double total = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    if (!(c.w >= 0.0) || !std::isfinite(c.w))
      throw ValidationError("mixture weight of component " + std::to_string(k + 1) +
                            " must be non-negative");
    if (!component::valid(family_.tag(), c))
      throw ValidationError("invalid " + std::string(to_string(family_.tag())) +
                            " parameters in component " + std::to_string(k + 1));
    total += c.w;
  }
  if (!(total > 0.0)) throw ValidationError("mixture weights must have a positive sum");
  for (auto& c : components_) c.w /= total;
}

double Mixture::density(double x) const {
  double acc = 0.0;
  for (const auto& c : components_) {
    if (c.w == 0.0) continue;
    acc += c.w * std::exp(component::log_pdf(family_.tag(), c, x));
  }
  return acc;
}

double Mixture::log_density(double x) const {
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) {
    if (c.w == 0.0) continue;
    terms.push_back(std::log(c.w) + component::log_pdf(family_.tag(), c, x));
  }
  return log_sum_exp(terms);
}

double Mixture::cdf(double x) const {
  double acc = 0.0;
  for (const auto& c : components_) acc += c.w * component::cdf(family_.tag(), c, x);
  return std::clamp(acc, 0.0, 1.0);
}

double Mixture::ccdf(double x) const {
  double acc = 0.0;
  for (const auto& c : components_) acc += c.w * component::ccdf(family_.tag(), c, x);
  return std::clamp(acc, 0.0, 1.0);
}

double Mixture::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile probability must lie in (0, 1)");
  const Family fam = family_.tag();
  double lo = kInf;
  double hi = -kInf;
  for (const auto& c : components_) {
    if (c.w == 0.0) continue;
    const double q = component::quantile(fam, c, p);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  if (lo == hi) return lo;
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  // Work with the upper tail above the median so that small tail
  // probabilities keep their relative precision.
  if (p > 0.5) {
    const double q = 1.0 - p;
    return find_root([&](double x) { return q - ccdf(x); }, lo, hi, 1e-12 * scale, 1e-15);
  }
  return find_root([&](double x) { return cdf(x) - p; }, lo, hi, 1e-12 * scale, 1e-15);
}

double Mixture::draw(std::mt19937_64& rng) const {
  std::size_t k = 0;
  if (components_.size() > 1) {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    for (k = 0; k + 1 < components_.size(); ++k) {
      u -= components_[k].w;
      if (u < 0.0) break;
    }
  }
  return component::draw(family_.tag(), components_[k], rng);
}

std::vector<double> Mixture::sample(std::size_t n, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) x = draw(rng);
  return out;
}

double Mixture::mean() const {
  double m = 0.0;
  for (const auto& c : components_) m += c.w * component::mean(family_.tag(), c);
  return m;
}

double Mixture::variance() const {
  const double m = mean();
  double second = 0.0;
  for (const auto& c : components_) {
    const double mk = component::mean(family_.tag(), c);
    second += c.w * (component::variance(family_.tag(), c) + (mk - m) * (mk - m));
  }
  return second;
}

MixtureSummary Mixture::summarize() const {
  MixtureSummary s;
  s.mean = mean();
  s.sd = std::sqrt(std::max(0.0, variance()));
  for (std::size_t i = 0; i < s.quantiles.size(); ++i)
    s.quantiles[i] = quantile(MixtureSummary::probabilities[i]);
  return s;
}

Mixture make_mixture(MixtureFamily family, std::vector<Component> components) {
  return Mixture(std::move(family), std::move(components));
}

Mixture combine(std::span<const Mixture> mixtures, std::span<const double> weights) {
  if (mixtures.empty()) throw ValidationError("combine needs at least one mixture");
  if (mixtures.size() != weights.size())
    throw ValidationError("combine needs one weight per mixture");
  const MixtureFamily& family = mixtures.front().family();
  std::vector<Component> all;
  for (std::size_t i = 0; i < mixtures.size(); ++i) {
    if (!(mixtures[i].family() == family))
      throw ValidationError("combine requires mixtures of identical family, sigma and likelihood");
    if (!(weights[i] >= 0.0)) throw ValidationError("combine weights must be non-negative");
    for (const auto& c : mixtures[i].components()) all.push_back({c.w * weights[i], c.a, c.b});
  }
  return Mixture(family, std::move(all));
}

Component vague_component(const MixtureFamily& family, double mean, double n,
                          VagueConvention convention) {
  if (!family.in_open_support(mean))
    throw ValidationError("robust component mean must lie inside the support");
  if (!(n > 0.0)) throw ValidationError("robust component sample size must be positive");
  if (family.tag() == Family::beta && convention == VagueConvention::total_n_plus_one) n += 1.0;
  auto [a, b] = from_mean_n(family, mean, n);
  if (family.tag() == Family::beta && convention == VagueConvention::offset_one) {
    a += 1.0;
    b += 1.0;
  }
  return {1.0, a, b};
}

Mixture robustify(const Mixture& mix, double weight, double mean, double n,
                  VagueConvention convention) {
  if (!(weight > 0.0 && weight < 1.0)) throw ValidationError("robust weight must lie in (0, 1)");
  const Mixture vague(mix.family(), {vague_component(mix.family(), mean, n, convention)});
  const std::array<Mixture, 2> parts{mix, vague};
  const std::array<double, 2> w{1.0 - weight, weight};
  return combine(parts, w);
}

}  // namespace mapkit
