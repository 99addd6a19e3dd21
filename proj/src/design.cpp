#include "mapkit/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace mapkit {

namespace bm = boost::math;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPoissonSearchCap = 1e9;

double normal_upper(double c, double mean, double sd) {
  return 0.5 * bm::erfc((c - mean) / (sd * std::numbers::sqrt2));
}

double normal_lower(double c, double mean, double sd) {
  return 0.5 * bm::erfc(-(c - mean) / (sd * std::numbers::sqrt2));
}

double sampling_sd(const Mixture& prior, double n) { return prior.family().sampling_sd() / std::sqrt(n); }

void check_theta(const MixtureFamily& family, double theta) {
  if (!family.in_support(theta) || !std::isfinite(theta))
    throw ValidationError("true parameter lies outside the parameter space of the " +
                          std::string(to_string(family.tag())) + " family");
}

// Position of a critical value on the real line for the monotonicity check.
double order_key(const CriticalValue& cv, bool upper) {
  switch (cv.status) {
    case BoundaryStatus::regular: return cv.critical;
    case BoundaryStatus::empty: return upper ? kInf : -kInf;
    case BoundaryStatus::full: return upper ? -kInf : kInf;
  }
  return 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Decision functions

void DecisionFunction::validate() const {
  if (criteria.empty()) throw ValidationError("a decision function needs at least one criterion");
  for (const auto& c : criteria) {
    if (!(c.p > 0.0 && c.p < 1.0)) throw ValidationError("probability thresholds must lie in (0, 1)");
    if (!std::isfinite(c.q)) throw ValidationError("quantile thresholds must be finite");
  }
  if (arity == Arity::one_sample && link != Link::identity)
    throw ValidationError("one-sample decisions do not take a link");
}

namespace {

DecisionFunction make_decision(std::span<const double> p, std::span<const double> q, bool lower_tail,
                               Arity arity, Link link) {
  if (p.size() != q.size())
    throw ValidationError("decision needs as many probability as quantile thresholds");
  DecisionFunction d;
  for (std::size_t i = 0; i < p.size(); ++i) d.criteria.push_back({p[i], q[i]});
  d.lower_tail = lower_tail;
  d.arity = arity;
  d.link = link;
  d.validate();
  return d;
}

}  // namespace

DecisionFunction decision1S(std::span<const double> p, std::span<const double> q, bool lower_tail) {
  return make_decision(p, q, lower_tail, Arity::one_sample, Link::identity);
}

DecisionFunction decision2S(std::span<const double> p, std::span<const double> q, bool lower_tail,
                            Link link) {
  return make_decision(p, q, lower_tail, Arity::two_sample, link);
}

std::vector<double> criterion_probabilities(const DecisionFunction& d, const Mixture& post1,
                                            const Mixture* post2) {
  d.validate();
  if ((d.arity == Arity::two_sample) != (post2 != nullptr))
    throw ValidationError("number of posteriors does not match the decision arity");
  std::vector<double> out;
  for (const auto& c : d.criteria) {
    double lower;
    double upper;
    if (post2) {
      lower = diff_cdf(post1, *post2, c.q, d.link);
      upper = 1.0 - lower;
    } else {
      lower = post1.cdf(c.q);
      upper = post1.ccdf(c.q);
    }
    out.push_back(d.lower_tail ? lower : upper);
  }
  return out;
}

bool evaluate_decision(const DecisionFunction& d, const Mixture& post1, const Mixture* post2) {
  const auto probs = criterion_probabilities(d, post1, post2);
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (!(probs[i] > d.criteria[i].p)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Designs

void Design::validate() const {
  decision.validate();
  auto check_arm = [](const Mixture& prior, double n, const char* arm) {
    const auto& f = prior.family();
    if (f.tag() == Family::gamma && f.likelihood() != GammaLikelihood::poisson)
      throw ValidationError(std::string(arm) + ": designs support poisson but not exponential data");
    if (!(n > 0.0) || !std::isfinite(n)) throw ValidationError(std::string(arm) + ": sample size must be positive");
    if (f.tag() == Family::beta && (n != std::floor(n) || n < 1.0))
      throw ValidationError(std::string(arm) + ": binomial sample size must be a positive integer");
  };
  check_arm(prior1, n1, "arm 1");
  if (decision.arity == Arity::one_sample) {
    if (prior2) throw ValidationError("one-sample designs take a single prior");
    return;
  }
  if (!prior2) throw ValidationError("two-sample designs need a prior for each arm");
  check_arm(*prior2, n2, "arm 2");
  if (prior1.family().tag() != prior2->family().tag())
    throw ValidationError("both arms of a two-sample design need the same family");
  if (!prior1.family().link_compatible(decision.link))
    throw ValidationError("decision link is incompatible with the arm family");
}

ObservedData make_outcome(const MixtureFamily& family, double y, double n) {
  switch (family.tag()) {
    case Family::beta: return BinomialData{std::lround(y), std::lround(n)};
    case Family::normal: return NormalData{y, n};
    case Family::gamma: return PoissonData{std::lround(y), n};
  }
  return NormalData{y, n};
}

std::string_view to_string(BoundaryStatus status) {
  switch (status) {
    case BoundaryStatus::regular: return "regular";
    case BoundaryStatus::empty: return "empty";
    case BoundaryStatus::full: return "full";
  }
  return "regular";
}

bool CriticalValue::success(double y1, bool upper_side) const {
  switch (status) {
    case BoundaryStatus::empty: return false;
    case BoundaryStatus::full: return true;
    case BoundaryStatus::regular: return upper_side ? y1 >= critical : y1 <= critical;
  }
  return false;
}

DesignEvaluator::DesignEvaluator(Design design) : design_(std::move(design)) { design_.validate(); }

bool DesignEvaluator::decide(double y1, double y2) const {
  const Mixture post1 = posterior_update(design_.prior1, make_outcome(design_.prior1.family(), y1, design_.n1));
  if (design_.decision.arity == Arity::one_sample) return evaluate_decision(design_.decision, post1);
  const Mixture post2 =
      posterior_update(*design_.prior2, make_outcome(design_.prior2->family(), y2, design_.n2));
  return evaluate_decision(design_.decision, post1, &post2);
}

// The posterior of arm 1 is stochastically increasing in y1 (monotone
// likelihood ratio), so for fixed y2 the success set in y1 is a half-line
// and is located by bisection.
CriticalValue DesignEvaluator::search(double y2) const {
  const bool upper = upper_side();
  auto ok = [&](double y1) { return decide(y1, y2); };
  // In the bisections below `pass` is a success point, `fail` a failure point.
  const Family fam = design_.prior1.family().tag();
  if (fam == Family::normal) {
    const double sigma = design_.prior1.family().sampling_sd();
    const double center = design_.prior1.mean();
    const double scale = sampling_sd(design_.prior1, design_.n1) + std::sqrt(design_.prior1.variance());
    const double dir = upper ? 1.0 : -1.0;
    std::optional<double> pass, fail;
    for (int k = 0; k < 64 && !(pass && fail); ++k) {
      const double r = scale * std::ldexp(1.0, k);
      if (!pass && ok(center + dir * r)) pass = center + dir * r;
      if (!fail && !ok(center - dir * r)) fail = center - dir * r;
    }
    if (!pass) return {BoundaryStatus::empty, kNaN};
    if (!fail) return {BoundaryStatus::full, kNaN};
    double p = *pass, f = *fail;
    // A tight boundary keeps the OC integrand smooth for adaptive quadrature.
    while (std::abs(p - f) > 1e-13 * (sigma + std::abs(p))) {
      const double mid = 0.5 * (p + f);
      if (mid == p || mid == f) break;
      (ok(mid) ? p : f) = mid;
    }
    return {BoundaryStatus::regular, p};
  }

  double hi_bound;
  if (fam == Family::beta) {
    hi_bound = design_.n1;
  } else {
    // Grow the range until the decision at the top is the one of large counts.
    hi_bound = std::max(1.0, 2.0 * design_.prior1.mean() * design_.n1);
    const bool top_state = ok(hi_bound);
    if (upper ? !top_state : top_state) {
      while (hi_bound < kPoissonSearchCap) {
        hi_bound *= 2.0;
        if (ok(hi_bound) == upper) break;
      }
    }
  }
  const bool at_zero = ok(0.0);
  const bool at_top = ok(hi_bound);
  if (upper) {
    if (!at_top) return {BoundaryStatus::empty, kNaN};
    if (at_zero) return {BoundaryStatus::full, kNaN};
    double f = 0.0, p = hi_bound;
    while (p - f > 1.0) {
      const double mid = std::floor(0.5 * (p + f));
      (ok(mid) ? p : f) = mid;
    }
    return {BoundaryStatus::regular, p};
  }
  if (!at_zero) return {BoundaryStatus::empty, kNaN};
  if (at_top) return {BoundaryStatus::full, kNaN};
  double p = 0.0, f = hi_bound;
  while (f - p > 1.0) {
    const double mid = std::floor(0.5 * (p + f));
    (ok(mid) ? p : f) = mid;
  }
  return {BoundaryStatus::regular, p};
}

CriticalValue DesignEvaluator::critical(double y2) const {
  const Family fam = design_.prior1.family().tag();
  if (design_.decision.arity == Arity::one_sample) {
    std::call_once(table_once_, [&] { table_ = {search(0.0)}; });
    return table_.front();
  }
  if (fam == Family::beta) {
    std::call_once(table_once_, [&] {
      std::vector<CriticalValue> t;
      for (long y = 0; y <= std::lround(design_.n2); ++y) t.push_back(search(double(y)));
      table_ = std::move(t);
    });
    const long y = std::lround(y2);
    if (y < 0 || y >= long(table_.size())) throw ValidationError("arm 2 outcome outside 0..n2");
    return table_[std::size_t(y)];
  }
  if (fam == Family::gamma) {
    const long y = std::lround(y2);
    {
      std::lock_guard lock(memo_mutex_);
      if (auto it = memo_.find(y); it != memo_.end()) return it->second;
    }
    const CriticalValue cv = search(double(y));
    std::lock_guard lock(memo_mutex_);
    memo_.emplace(y, cv);
    return cv;
  }
  return search(y2);
}

Boundary DesignEvaluator::boundary() const {
  Boundary b;
  b.arity = design_.decision.arity;
  b.upper_side = upper_side();
  if (b.arity == Arity::one_sample) {
    b.one_sample = critical();
    return b;
  }
  const Family fam = design_.prior2->family().tag();
  if (fam == Family::beta) {
    for (long y = 0; y <= std::lround(design_.n2); ++y) b.y2.push_back(double(y));
  } else {
    const auto pred = predictive(*design_.prior2, design_.n2);
    if (fam == Family::gamma) {
      const long top = long(pred.quantile(1.0 - kOutcomeEpsilon));
      for (long y = 0; y <= top; ++y) b.y2.push_back(double(y));
    } else {
      const double lo = pred.quantile(0.5 * kOutcomeEpsilon);
      const double hi = pred.quantile(1.0 - 0.5 * kOutcomeEpsilon);
      for (int i = 0; i <= 100; ++i) b.y2.push_back(lo + (hi - lo) * i / 100.0);
    }
  }
  for (double y : b.y2) b.critical_y1.push_back(critical(y));
  for (std::size_t i = 1; i < b.critical_y1.size(); ++i)
    if (order_key(b.critical_y1[i], b.upper_side) < order_key(b.critical_y1[i - 1], b.upper_side))
      b.monotone = false;
  return b;
}

double DesignEvaluator::arm1_success(const CriticalValue& cv, double theta1) const {
  if (cv.status == BoundaryStatus::empty) return 0.0;
  if (cv.status == BoundaryStatus::full) return 1.0;
  const bool upper = upper_side();
  const double c = cv.critical;
  const double n = design_.n1;
  switch (design_.prior1.family().tag()) {
    case Family::beta:
      if (upper) return c <= 0.0 ? 1.0 : (c > n ? 0.0 : bm::ibeta(c, n - c + 1.0, theta1));
      return c >= n ? 1.0 : (c < 0.0 ? 0.0 : bm::ibetac(c + 1.0, n - c, theta1));
    case Family::gamma: {
      const double lambda = n * theta1;
      if (upper) return c <= 0.0 ? 1.0 : (lambda == 0.0 ? 0.0 : bm::gamma_p(c, lambda));
      return lambda == 0.0 ? 1.0 : bm::gamma_q(c + 1.0, lambda);
    }
    case Family::normal: {
      const double sd = sampling_sd(design_.prior1, n);
      return upper ? normal_upper(c, theta1, sd) : normal_lower(c, theta1, sd);
    }
  }
  return 0.0;
}

double DesignEvaluator::arm1_success_predictive(const CriticalValue& cv,
                                                const PredictiveMixture& pred) const {
  if (cv.status == BoundaryStatus::empty) return 0.0;
  if (cv.status == BoundaryStatus::full) return 1.0;
  const double c = cv.critical;
  if (pred.family == PredictiveFamily::normal) {
    double acc = 0.0;
    for (const auto& k : pred.components)
      acc += k.w * (upper_side() ? normal_upper(c, k.a, k.b) : normal_lower(c, k.a, k.b));
    return acc;
  }
  return upper_side() ? 1.0 - pred.cdf(c - 1.0) : pred.cdf(c);
}

double DesignEvaluator::over_arm2(const std::function<double(double)>& h, double theta2) const {
  const double n = design_.n2;
  switch (design_.prior2->family().tag()) {
    case Family::beta: {
      const bm::binomial_distribution<double> dist(n, theta2);
      double acc = 0.0;
      for (long y = 0; y <= std::lround(n); ++y) {
        const double p = bm::pdf(dist, double(y));
        if (p > 0.0) acc += p * h(double(y));
      }
      return acc;
    }
    case Family::gamma: {
      const double lambda = n * theta2;
      if (lambda == 0.0) return h(0.0);
      const bm::poisson_distribution<double> dist(lambda);
      const long lo = long(std::floor(bm::quantile(dist, 0.5 * kOutcomeEpsilon)));
      const long hi = long(std::ceil(bm::quantile(bm::complement(dist, 0.5 * kOutcomeEpsilon))));
      double acc = 0.0;
      for (long y = std::max(0L, lo); y <= hi; ++y) acc += bm::pdf(dist, double(y)) * h(double(y));
      return acc;
    }
    case Family::normal: {
      const double sd = sampling_sd(*design_.prior2, n);
      return component::expectation(Family::normal, {1.0, theta2, sd}, h, 1e-9);
    }
  }
  return 0.0;
}

double DesignEvaluator::over_arm2_predictive(const std::function<double(double)>& h,
                                             const PredictiveMixture& pred) const {
  switch (pred.family) {
    case PredictiveFamily::beta_binomial: {
      double acc = 0.0;
      for (long y = 0; y <= std::lround(pred.n); ++y) {
        const double p = pred.pmf(double(y));
        if (p > 0.0) acc += p * h(double(y));
      }
      return acc;
    }
    case PredictiveFamily::negative_binomial: {
      const long hi = long(pred.quantile(1.0 - kOutcomeEpsilon));
      double acc = 0.0;
      for (long y = 0; y <= hi; ++y) acc += pred.pmf(double(y)) * h(double(y));
      return acc;
    }
    case PredictiveFamily::normal: {
      double acc = 0.0;
      for (const auto& k : pred.components)
        acc += k.w * component::expectation(Family::normal, {1.0, k.a, k.b}, h, 1e-9);
      return acc;
    }
  }
  return 0.0;
}

double DesignEvaluator::oc(double theta1, double theta2) const {
  check_theta(design_.prior1.family(), theta1);
  if (design_.decision.arity == Arity::one_sample) return arm1_success(critical(), theta1);
  check_theta(design_.prior2->family(), theta2);
  return over_arm2([&](double y2) { return arm1_success(critical(y2), theta1); }, theta2);
}

double DesignEvaluator::pos(const Mixture& theta1_prior, const Mixture* theta2_prior) const {
  if (theta1_prior.family().tag() != design_.prior1.family().tag())
    throw ValidationError("parameter prior of arm 1 does not match the design family");
  const auto pred1 = predictive(theta1_prior, design_.n1);
  if (design_.decision.arity == Arity::one_sample) return arm1_success_predictive(critical(), pred1);
  if (!theta2_prior) throw ValidationError("two-sample probability of success needs two priors");
  if (theta2_prior->family().tag() != design_.prior2->family().tag())
    throw ValidationError("parameter prior of arm 2 does not match the design family");
  const auto pred2 = predictive(*theta2_prior, design_.n2);
  return over_arm2_predictive([&](double y2) { return arm1_success_predictive(critical(y2), pred1); },
                              pred2);
}

CriticalValue decision1S_boundary(const Design& design) {
  if (design.decision.arity != Arity::one_sample) throw ValidationError("design is not one-sample");
  return DesignEvaluator(design).critical();
}

Boundary decision2S_boundary(const Design& design) {
  if (design.decision.arity != Arity::two_sample) throw ValidationError("design is not two-sample");
  return DesignEvaluator(design).boundary();
}

std::function<double(double)> oc1S(const Design& design) {
  if (design.decision.arity != Arity::one_sample) throw ValidationError("design is not one-sample");
  auto ev = std::make_shared<DesignEvaluator>(design);
  return [ev](double theta) { return ev->oc(theta); };
}

std::function<double(double, double)> oc2S(const Design& design) {
  if (design.decision.arity != Arity::two_sample) throw ValidationError("design is not two-sample");
  auto ev = std::make_shared<DesignEvaluator>(design);
  return [ev](double theta1, double theta2) { return ev->oc(theta1, theta2); };
}

std::vector<double> oc2S(const Design& design, std::span<const double> theta1,
                         std::span<const double> theta2) {
  if (theta1.size() != theta2.size()) throw ValidationError("theta vectors must have equal length");
  const auto f = oc2S(design);
  std::vector<double> out;
  for (std::size_t i = 0; i < theta1.size(); ++i) out.push_back(f(theta1[i], theta2[i]));
  return out;
}

double pos1S(const Design& design, const Mixture& theta_prior) {
  if (design.decision.arity != Arity::one_sample) throw ValidationError("design is not one-sample");
  return DesignEvaluator(design).pos(theta_prior);
}

double pos2S(const Design& design, const Mixture& theta1_prior, const Mixture& theta2_prior) {
  if (design.decision.arity != Arity::two_sample) throw ValidationError("design is not two-sample");
  return DesignEvaluator(design).pos(theta1_prior, &theta2_prior);
}

}  // namespace mapkit
