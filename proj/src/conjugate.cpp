#include "mapkit/conjugate.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace mapkit {

namespace bm = boost::math;

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_beta_fn(double a, double b) { return bm::lgamma(a) + bm::lgamma(b) - bm::lgamma(a + b); }

double log_choose(double n, double k) {
  return bm::lgamma(n + 1.0) - bm::lgamma(k + 1.0) - bm::lgamma(n - k + 1.0);
}

double normal_log_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double beta_binomial_log_pmf(double y, double n, double a, double b) {
  return log_choose(n, y) + log_beta_fn(a + y, b + n - y) - log_beta_fn(a, b);
}

double neg_binomial_log_pmf(double y, double exposure, double a, double b) {
  return bm::lgamma(a + y) - bm::lgamma(a) - bm::lgamma(y + 1.0) + a * std::log(b / (b + exposure)) +
         y * std::log(exposure / (b + exposure));
}

[[noreturn]] void mismatch(const MixtureFamily& family) {
  throw ValidationError("observed data does not match the " + std::string(to_string(family.tag())) +
                        " mixture family");
}

}  // namespace

NormalData NormalData::from_se(double estimate, double se, double sigma) {
  if (!(se > 0.0)) throw ValidationError("standard error must be positive");
  if (!(sigma > 0.0)) throw ValidationError("sampling sd must be positive");
  return {estimate, sigma * sigma / (se * se)};
}

void validate(const ObservedData& data) {
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, BinomialData>) {
          if (d.n < 0 || d.r < 0 || d.r > d.n)
            throw ValidationError("binomial data requires 0 <= r <= n");
        } else if constexpr (std::is_same_v<T, NormalData>) {
          if (!(d.n > 0.0) || !std::isfinite(d.mean))
            throw ValidationError("normal data requires a finite mean and n > 0");
        } else {
          if (d.count < 0 || !(d.exposure > 0.0))
            throw ValidationError("poisson data requires count >= 0 and exposure > 0");
        }
      },
      data);
}

std::pair<double, double> from_mean_n(const MixtureFamily& family, double mean, double n) {
  if (!(n > 0.0)) throw ValidationError("number of observations must be positive");
  switch (family.tag()) {
    case Family::beta:
      if (!(mean > 0.0 && mean < 1.0)) throw ValidationError("beta mean must lie in (0, 1)");
      return {mean * n, (1.0 - mean) * n};
    case Family::gamma:
      if (!(mean > 0.0)) throw ValidationError("gamma mean must be positive");
      if (family.likelihood() == GammaLikelihood::exponential) return {n, n / mean};
      return {mean * n, n};
    case Family::normal: return {mean, family.sampling_sd() / std::sqrt(n)};
  }
  return {0.0, 0.0};
}

std::pair<double, double> from_mean_sd(const MixtureFamily& family, double mean, double sd) {
  if (!(sd > 0.0)) throw ValidationError("standard deviation must be positive");
  const double v = sd * sd;
  switch (family.tag()) {
    case Family::beta: {
      if (!(mean > 0.0 && mean < 1.0)) throw ValidationError("beta mean must lie in (0, 1)");
      if (!(v < mean * (1.0 - mean)))
        throw ValidationError("infeasible beta moments: sd^2 must be below mean (1 - mean)");
      const double n = mean * (1.0 - mean) / v - 1.0;
      return {mean * n, (1.0 - mean) * n};
    }
    case Family::gamma:
      if (!(mean > 0.0)) throw ValidationError("gamma mean must be positive");
      return {mean * mean / v, mean / v};
    case Family::normal: return {mean, sd};
  }
  return {0.0, 0.0};
}

double log_marginal_likelihood(const MixtureFamily& family, const Component& c,
                               const ObservedData& data) {
  switch (family.tag()) {
    case Family::beta: {
      const auto* d = std::get_if<BinomialData>(&data);
      if (!d) mismatch(family);
      return beta_binomial_log_pmf(double(d->r), double(d->n), c.a, c.b);
    }
    case Family::normal: {
      const auto* d = std::get_if<NormalData>(&data);
      if (!d) mismatch(family);
      const double sigma = family.sampling_sd();
      return normal_log_pdf(d->mean, c.a, std::sqrt(c.b * c.b + sigma * sigma / d->n));
    }
    case Family::gamma: {
      const auto* d = std::get_if<PoissonData>(&data);
      if (!d || family.likelihood() != GammaLikelihood::poisson) mismatch(family);
      return neg_binomial_log_pmf(double(d->count), d->exposure, c.a, c.b);
    }
  }
  return 0.0;
}

Mixture posterior_update(const Mixture& prior, const ObservedData& data) {
  validate(data);
  const MixtureFamily& family = prior.family();
  std::vector<Component> post;
  std::vector<double> log_w;
  post.reserve(prior.size());
  for (const auto& c : prior.components()) {
    const double lml = log_marginal_likelihood(family, c, data);
    log_w.push_back(c.w > 0.0 ? std::log(c.w) + lml : -std::numeric_limits<double>::infinity());
    switch (family.tag()) {
      case Family::beta: {
        const auto& d = std::get<BinomialData>(data);
        post.push_back({0.0, c.a + double(d.r), c.b + double(d.n - d.r)});
        break;
      }
      case Family::normal: {
        const auto& d = std::get<NormalData>(data);
        const double sigma = family.sampling_sd();
        const double prior_prec = 1.0 / (c.b * c.b);
        const double data_prec = d.n / (sigma * sigma);
        const double prec = prior_prec + data_prec;
        post.push_back({0.0, (c.a * prior_prec + d.mean * data_prec) / prec, 1.0 / std::sqrt(prec)});
        break;
      }
      case Family::gamma: {
        const auto& d = std::get<PoissonData>(data);
        post.push_back({0.0, c.a + double(d.count), c.b + d.exposure});
        break;
      }
    }
  }
  const double lse = log_sum_exp(log_w);
  if (!std::isfinite(lse)) throw NumericalError("posterior weights are not finite");
  for (std::size_t k = 0; k < post.size(); ++k) post[k].w = std::exp(log_w[k] - lse);
  return Mixture(family, std::move(post));
}

// ---------------------------------------------------------------------------
// Predictive distributions

std::string_view to_string(PredictiveFamily family) {
  switch (family) {
    case PredictiveFamily::normal: return "normal";
    case PredictiveFamily::beta_binomial: return "beta_binomial";
    case PredictiveFamily::negative_binomial: return "negative_binomial";
  }
  return "normal";
}

PredictiveFamily predictive_family_from_string(std::string_view name) {
  if (name == "normal") return PredictiveFamily::normal;
  if (name == "beta_binomial") return PredictiveFamily::beta_binomial;
  if (name == "negative_binomial") return PredictiveFamily::negative_binomial;
  throw ValidationError("unknown predictive family '" + std::string(name) + "'");
}

PredictiveMixture predictive(const Mixture& prior, double n) {
  if (!(n > 0.0)) throw ValidationError("predictive sample size must be positive");
  PredictiveMixture pred;
  pred.n = n;
  const MixtureFamily& family = prior.family();
  switch (family.tag()) {
    case Family::beta:
      if (n != std::floor(n)) throw ValidationError("binomial trial size must be an integer");
      pred.family = PredictiveFamily::beta_binomial;
      pred.components.assign(prior.components().begin(), prior.components().end());
      break;
    case Family::gamma:
      if (family.likelihood() != GammaLikelihood::poisson)
        throw ValidationError("predictive distribution is not available for the exponential likelihood");
      pred.family = PredictiveFamily::negative_binomial;
      pred.components.assign(prior.components().begin(), prior.components().end());
      break;
    case Family::normal: {
      pred.family = PredictiveFamily::normal;
      const double sigma = family.sampling_sd();
      for (const auto& c : prior.components())
        pred.components.push_back({c.w, c.a, std::sqrt(c.b * c.b + sigma * sigma / n)});
      break;
    }
  }
  return pred;
}

double PredictiveMixture::log_pmf(double y) const {
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) {
    if (c.w == 0.0) continue;
    double lp = -std::numeric_limits<double>::infinity();
    switch (family) {
      case PredictiveFamily::normal: lp = normal_log_pdf(y, c.a, c.b); break;
      case PredictiveFamily::beta_binomial:
        if (y >= 0.0 && y <= n && y == std::floor(y)) lp = beta_binomial_log_pmf(y, n, c.a, c.b);
        break;
      case PredictiveFamily::negative_binomial:
        if (y >= 0.0 && y == std::floor(y)) lp = neg_binomial_log_pmf(y, n, c.a, c.b);
        break;
    }
    terms.push_back(std::log(c.w) + lp);
  }
  return log_sum_exp(terms);
}

double PredictiveMixture::pmf(double y) const { return std::exp(log_pmf(y)); }

double PredictiveMixture::cdf(double y) const {
  double acc = 0.0;
  switch (family) {
    case PredictiveFamily::normal:
      for (const auto& c : components)
        acc += c.w * 0.5 * std::erfc(-(y - c.a) / (c.b * std::numbers::sqrt2));
      break;
    case PredictiveFamily::beta_binomial: {
      if (y < 0.0) return 0.0;
      if (y >= n) return 1.0;
      const long top = static_cast<long>(std::floor(y));
      for (long k = 0; k <= top; ++k) acc += pmf(double(k));
      break;
    }
    case PredictiveFamily::negative_binomial: {
      if (y < 0.0) return 0.0;
      const double k = std::floor(y);
      for (const auto& c : components) acc += c.w * bm::ibeta(c.a, k + 1.0, c.b / (c.b + n));
      break;
    }
  }
  return std::min(1.0, std::max(0.0, acc));
}

double PredictiveMixture::mean() const {
  double m = 0.0;
  for (const auto& c : components) {
    switch (family) {
      case PredictiveFamily::normal: m += c.w * c.a; break;
      case PredictiveFamily::beta_binomial: m += c.w * n * c.a / (c.a + c.b); break;
      case PredictiveFamily::negative_binomial: m += c.w * n * c.a / c.b; break;
    }
  }
  return m;
}

double PredictiveMixture::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile probability must lie in (0, 1)");
  if (family == PredictiveFamily::normal) {
    std::vector<Component> comps = components;
    return Mixture(MixtureFamily::normal(1.0), std::move(comps)).quantile(p);
  }
  if (family == PredictiveFamily::beta_binomial) {
    double acc = 0.0;
    for (long k = 0; k < static_cast<long>(n); ++k) {
      acc += pmf(double(k));
      if (acc >= p) return double(k);
    }
    return n;
  }
  double hi = std::max(1.0, std::ceil(mean()));
  while (cdf(hi) < p) hi *= 2.0;
  double lo = -1.0;  // cdf(lo) < p
  while (hi - lo > 1.0) {
    const double mid = std::floor(0.5 * (lo + hi));
    if (cdf(mid) >= p)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace mapkit
