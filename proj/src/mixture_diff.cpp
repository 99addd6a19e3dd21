#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mapkit/mixture.hpp"

namespace mapkit {

namespace {

void check_pair(const Mixture& mix1, const Mixture& mix2, Link link) {
  if (mix1.family().tag() != mix2.family().tag())
    throw ValidationError("difference distributions need mixtures of the same family");
  if (!mix1.family().link_compatible(link))
    throw ValidationError("link '" + std::string(to_string(link)) + "' is incompatible with the " +
                          std::string(to_string(mix1.family().tag())) + " family");
}

bool exact_normal(const Mixture& mix1, Link link) {
  return mix1.family().tag() == Family::normal && link == Link::identity;
}

// Pairwise differences of two normal mixtures as one normal mixture.
Mixture normal_difference(const Mixture& mix1, const Mixture& mix2) {
  std::vector<Component> comps;
  comps.reserve(mix1.size() * mix2.size());
  for (const auto& c1 : mix1.components())
    for (const auto& c2 : mix2.components())
      comps.push_back({c1.w * c2.w, c1.a - c2.a, std::hypot(c1.b, c2.b)});
  return Mixture(MixtureFamily::normal(1.0), std::move(comps));
}

double narrowest_sd(const Mixture& mix) {
  double sd = std::numeric_limits<double>::infinity();
  for (const auto& c : mix.components())
    if (c.w > 0.0) sd = std::min(sd, std::sqrt(component::variance(mix.family().tag(), c)));
  return sd;
}

// Derivative of the inverse link at v, expressed through x = g^-1(v).
double inverse_link_slope(Link link, double x) {
  switch (link) {
    case Link::identity: return 1.0;
    case Link::logit: return x * (1.0 - x);
    case Link::log: return x;
  }
  return 1.0;
}

// Range of g(X) holding all but a negligible tail of the mixture mass.
std::pair<double, double> link_range(const Mixture& mix, Link link) {
  constexpr double kTail = 1e-12;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : mix.components()) {
    if (c.w == 0.0) continue;
    lo = std::min(lo, apply_link(link, component::quantile(mix.family().tag(), c, kTail)));
    hi = std::max(hi, apply_link(link, component::quantile(mix.family().tag(), c, 1.0 - kTail)));
  }
  return {lo, hi};
}

}  // namespace

namespace detail {

double diff_cdf_over_second(const Mixture& mix1, const Mixture& mix2, double delta, Link link) {
  const Family fam = mix2.family().tag();
  auto inner = [&](double t) { return mix1.cdf(inverse_link(link, delta + apply_link(link, t))); };
  double acc = 0.0;
  for (const auto& c : mix2.components())
    if (c.w > 0.0) acc += c.w * component::expectation(fam, c, inner);
  return std::clamp(acc, 0.0, 1.0);
}

double diff_cdf_over_first(const Mixture& mix1, const Mixture& mix2, double delta, Link link) {
  const Family fam = mix1.family().tag();
  auto inner = [&](double s) { return mix2.ccdf(inverse_link(link, apply_link(link, s) - delta)); };
  double acc = 0.0;
  for (const auto& c : mix1.components())
    if (c.w > 0.0) acc += c.w * component::expectation(fam, c, inner);
  return std::clamp(acc, 0.0, 1.0);
}

}  // namespace detail

double diff_cdf(const Mixture& mix1, const Mixture& mix2, double delta, Link link) {
  check_pair(mix1, mix2, link);
  if (exact_normal(mix1, link)) return normal_difference(mix1, mix2).cdf(delta);
  // The integrand is the cdf of the other mixture; integrating over the more
  // concentrated mixture keeps that cdf smooth on each quadrature interval.
  if (narrowest_sd(mix2) <= narrowest_sd(mix1))
    return detail::diff_cdf_over_second(mix1, mix2, delta, link);
  return detail::diff_cdf_over_first(mix1, mix2, delta, link);
}

double diff_density(const Mixture& mix1, const Mixture& mix2, double delta, Link link) {
  check_pair(mix1, mix2, link);
  if (exact_normal(mix1, link)) return normal_difference(mix1, mix2).density(delta);
  const Family fam = mix2.family().tag();
  auto inner = [&](double t) {
    const double x = inverse_link(link, delta + apply_link(link, t));
    if (!mix1.family().in_open_support(x)) return 0.0;
    return mix1.density(x) * inverse_link_slope(link, x);
  };
  double acc = 0.0;
  for (const auto& c : mix2.components())
    if (c.w > 0.0) acc += c.w * component::expectation(fam, c, inner);
  return acc;
}

double diff_quantile(const Mixture& mix1, const Mixture& mix2, double p, Link link) {
  check_pair(mix1, mix2, link);
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile probability must lie in (0, 1)");
  if (exact_normal(mix1, link)) return normal_difference(mix1, mix2).quantile(p);
  const auto [lo1, hi1] = link_range(mix1, link);
  const auto [lo2, hi2] = link_range(mix2, link);
  double lo = lo1 - hi2;
  double hi = hi1 - lo2;
  if (!std::isfinite(lo)) lo = -1e300;
  if (!std::isfinite(hi)) hi = 1e300;
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  return find_root([&](double d) { return diff_cdf(mix1, mix2, d, link) - p; }, lo, hi,
                   1e-10 * scale, 1e-12);
}

std::vector<double> diff_sample(const Mixture& mix1, const Mixture& mix2, std::size_t n,
                                std::uint64_t seed, Link link) {
  check_pair(mix1, mix2, link);
  std::mt19937_64 rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) {
    const double x1 = mix1.draw(rng);
    const double x2 = mix2.draw(rng);
    x = apply_link(link, x1) - apply_link(link, x2);
  }
  return out;
}

}  // namespace mapkit
