#include "mapkit/em_fit.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "mapkit/conjugate.hpp"

namespace mapkit {

namespace bm = boost::math;

namespace {

constexpr double kBetaClamp = 1e-8;
constexpr double kMinWeight = 1e-8;
constexpr double kMinVariance = 1e-12;
constexpr double kStudentDf = 4.0;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Per-point quantities reused by every E-step.
struct Prepared {
  std::span<const double> y;
  std::vector<double> log_y;
  std::vector<double> log1m_y;
};

Prepared prepare(const EmSample& sample, Family family) {
  Prepared p{sample.values, {}, {}};
  if (family != Family::normal) {
    p.log_y.reserve(sample.values.size());
    for (double v : sample.values) p.log_y.push_back(std::log(v));
  }
  if (family == Family::beta) {
    p.log1m_y.reserve(sample.values.size());
    for (double v : sample.values) p.log1m_y.push_back(std::log1p(-v));
  }
  return p;
}

// Log density of component c at point i without the mixture weight.
struct ComponentKernel {
  Family family;
  double a, b, norm;

  ComponentKernel(Family f, const Component& c) : family(f), a(c.a), b(c.b) {
    switch (family) {
      case Family::normal: norm = -std::log(b) - kLogSqrt2Pi; break;
      case Family::beta: norm = bm::lgamma(a + b) - bm::lgamma(a) - bm::lgamma(b); break;
      case Family::gamma: norm = a * std::log(b) - bm::lgamma(a); break;
    }
  }

  double operator()(const Prepared& p, std::size_t i) const {
    switch (family) {
      case Family::normal: {
        const double z = (p.y[i] - a) / b;
        return norm - 0.5 * z * z;
      }
      case Family::beta: return norm + (a - 1.0) * p.log_y[i] + (b - 1.0) * p.log1m_y[i];
      case Family::gamma: return norm + (a - 1.0) * p.log_y[i] - b * p.y[i];
    }
    return 0.0;
  }
};

// E-step: fills resp (N x K, row-major) and returns the log-likelihood.
double e_step(const Prepared& p, Family family, std::span<const Component> comps,
              std::vector<double>& resp) {
  const std::size_t n = p.y.size();
  const std::size_t k = comps.size();
  std::vector<ComponentKernel> kernels;
  std::vector<double> log_w;
  for (const auto& c : comps) {
    kernels.emplace_back(family, c);
    log_w.push_back(std::log(c.w));
  }
  resp.resize(n * k);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = resp.data() + i * k;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = log_w[j] + kernels[j](p, i);
      top = std::max(top, row[j]);
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - top);
      acc += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= acc;
    ll += top + std::log(acc);
  }
  return ll;
}

Component moment_match(const MixtureFamily& family, double w, double mean, double var) {
  switch (family.tag()) {
    case Family::normal: return {w, mean, std::sqrt(var)};
    case Family::beta: {
      // Keep the moment pair feasible for clusters squeezed against 0 or 1.
      const double v = std::min(var, 0.9 * mean * (1.0 - mean));
      const double n = mean * (1.0 - mean) / v - 1.0;
      return {w, mean * n, (1.0 - mean) * n};
    }
    case Family::gamma: return {w, mean * mean / var, mean / var};
  }
  return {w, 0.0, 0.0};
}

// Convergence bookkeeping shared by the normal, beta/gamma and Student-t loops.
class Convergence {
 public:
  explicit Convergence(const EmOptions& o) : opt_(o) {}

  bool update(double ll) {
    if (has_prev_) {
      const double delta = std::abs(ll - prev_);
      streak_ = delta < opt_.abs_tol ? streak_ + 1 : 0;
      if (streak_ >= opt_.window) return true;
      if (delta <= opt_.rel_tol * std::abs(ll)) return true;
    }
    prev_ = ll;
    has_prev_ = true;
    return false;
  }

 private:
  const EmOptions& opt_;
  double prev_ = 0.0;
  bool has_prev_ = false;
  std::size_t streak_ = 0;
};

// Student-t EM with fixed degrees of freedom (location/scale updates with
// the latent precision weights u = (nu + 1) / (nu + d^2)).
std::vector<Component> student_t_fit(std::span<const double> y, std::vector<Component> comps,
                                     std::size_t max_iter) {
  const double nu = kStudentDf;
  const double log_c = bm::lgamma(0.5 * (nu + 1.0)) - bm::lgamma(0.5 * nu) -
                       0.5 * std::log(nu * std::numbers::pi);
  const std::size_t n = y.size();
  const std::size_t k = comps.size();
  std::vector<double> resp(n * k);
  std::vector<double> u(n * k);
  EmOptions opt;
  Convergence conv(opt);
  for (std::size_t it = 0; it < max_iter; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d = (y[i] - comps[j].a) / comps[j].b;
        u[i * k + j] = (nu + 1.0) / (nu + d * d);
        resp[i * k + j] = std::log(comps[j].w) + log_c - std::log(comps[j].b) -
                          0.5 * (nu + 1.0) * std::log1p(d * d / nu);
        top = std::max(top, resp[i * k + j]);
      }
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += resp[i * k + j] = std::exp(resp[i * k + j] - top);
      for (std::size_t j = 0; j < k; ++j) resp[i * k + j] /= acc;
      ll += top + std::log(acc);
    }
    if (conv.update(ll)) break;
    for (std::size_t j = 0; j < k; ++j) {
      double nk = 0.0, su = 0.0, suy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * k + j];
        nk += r;
        su += r * u[i * k + j];
        suy += r * u[i * k + j] * y[i];
      }
      if (nk < kMinWeight * double(n) || su <= 0.0) return comps;
      const double mu = suy / su;
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) ss += resp[i * k + j] * u[i * k + j] * (y[i] - mu) * (y[i] - mu);
      const double scale2 = ss / nk;
      if (!(scale2 > kMinVariance)) return comps;
      comps[j] = {nk / double(n), mu, std::sqrt(scale2)};
    }
  }
  return comps;
}

struct CollapseError {
  std::size_t component;
};

// Runs EM from `comps`; throws CollapseError when a component degenerates.
EmFitResult run_em(const EmSample& sample, const MixtureFamily& family, std::vector<Component> comps,
                   const EmOptions& options) {
  const Family fam = family.tag();
  const Prepared p = prepare(sample, fam);
  const std::size_t n = sample.values.size();
  const std::size_t k = comps.size();
  std::vector<double> resp;
  std::vector<double> counts(k, 0.0);
  std::vector<double> trace;
  Convergence conv(options);
  bool converged = false;
  std::size_t it = 0;
  double ll = e_step(p, fam, comps, resp);
  for (; it < options.max_iter; ++it) {
    // M-step.
    for (std::size_t j = 0; j < k; ++j) {
      double nk = 0.0, s1 = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * k + j];
        nk += r;
        switch (fam) {
          case Family::normal: s1 += r * p.y[i]; break;
          case Family::beta:
            s1 += r * p.log_y[i];
            s2 += r * p.log1m_y[i];
            break;
          case Family::gamma:
            s1 += r * p.y[i];
            s2 += r * p.log_y[i];
            break;
        }
      }
      if (nk < kMinWeight * double(n)) throw CollapseError{j};
      counts[j] = nk;
      const double w = nk / double(n);
      switch (fam) {
        case Family::normal: {
          const double mu = s1 / nk;
          double ss = 0.0;
          for (std::size_t i = 0; i < n; ++i) ss += resp[i * k + j] * (p.y[i] - mu) * (p.y[i] - mu);
          const double var = ss / nk;
          if (!(var > kMinVariance)) throw CollapseError{j};
          comps[j] = {w, mu, std::sqrt(var)};
          break;
        }
        case Family::beta: {
          const auto [a, b] = detail::beta_mstep(s1 / nk, s2 / nk, comps[j].a, comps[j].b);
          comps[j] = {w, a, b};
          if (!(component::variance(fam, comps[j]) > kMinVariance)) throw CollapseError{j};
          break;
        }
        case Family::gamma: {
          const double mean = s1 / nk;
          const double mean_log = s2 / nk;
          if (!(std::log(mean) - mean_log > 1e-14)) throw CollapseError{j};
          const auto [a, b] = detail::gamma_mstep(mean, mean_log);
          comps[j] = {w, a, b};
          if (!(component::variance(fam, comps[j]) > kMinVariance)) throw CollapseError{j};
          break;
        }
      }
    }
    const double prev = ll;
    ll = e_step(p, fam, comps, resp);
    if (options.keep_trace) {
      if (trace.empty()) trace.push_back(prev);
      trace.push_back(ll);
    }
    if (!std::isfinite(ll)) throw NumericalError("EM log-likelihood is not finite");
    if (it == 0) conv.update(prev);
    if (conv.update(ll)) {
      converged = true;
      ++it;
      break;
    }
  }

  // Weights are N_k / N of the last M-step; renormalise only for rounding.
  EmFitResult result{Mixture(family, comps), ll, it, converged, counts, 0.0, std::move(trace), {}};
  result.aic = 2.0 * double(free_parameters(k)) - 2.0 * ll;
  if (!converged) result.warnings.push_back("EM did not converge within max_iter");
  return result;
}

std::size_t count_distinct(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::size_t(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

EmSample make_em_sample(std::vector<double> values, const MixtureFamily& family) {
  if (values.empty()) throw ValidationError("EM sample is empty");
  EmSample s;
  for (double& v : values) {
    if (!std::isfinite(v)) throw ValidationError("EM sample contains a non-finite value");
    switch (family.tag()) {
      case Family::normal: break;
      case Family::beta:
        if (v < 0.0 || v > 1.0) throw ValidationError("beta EM sample values must lie in [0, 1]");
        if (v < kBetaClamp || v > 1.0 - kBetaClamp) {
          v = std::clamp(v, kBetaClamp, 1.0 - kBetaClamp);
          ++s.clamped;
        }
        break;
      case Family::gamma:
        if (!(v > 0.0)) throw ValidationError("gamma EM sample values must be positive");
        break;
    }
  }
  s.values = std::move(values);
  return s;
}

double loglik(const Mixture& mix, std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc += mix.log_density(v);
  return acc;
}

std::vector<Component> knn_init(const EmSample& sample, const MixtureFamily& family, std::size_t k,
                                std::uint64_t seed) {
  const auto& y = sample.values;
  const std::size_t n = y.size();
  if (k < 1) throw ValidationError("number of components must be at least 1");
  if (count_distinct(y) < std::max<std::size_t>(k, 2))
    throw ValidationError("sample has fewer distinct values than requested components");

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<double> centers;
  centers.push_back(y[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (y[i] - c) * (y[i] - c));
      d2[i] = best;
    }
    std::discrete_distribution<std::size_t> pick(d2.begin(), d2.end());
    centers.push_back(y[pick(rng)]);
  }

  // Lloyd iterations.
  std::vector<std::size_t> label(n, 0);
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (std::abs(y[i] - centers[j]) < std::abs(y[i] - centers[best])) best = j;
      changed |= best != label[i];
      label[i] = best;
    }
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[label[i]] += y[i];
      ++cnt[label[i]];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (cnt[j] > 0) centers[j] = sum[j] / double(cnt[j]);
    if (!changed && iter > 0) break;
  }

  double total_mean = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
  double total_var = 0.0;
  for (double v : y) total_var += (v - total_mean) * (v - total_mean);
  total_var /= double(n);

  std::vector<Component> comps;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0, ss = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (label[i] == j) {
        s += y[i];
        ++c;
      }
    if (c == 0) continue;
    const double m = s / double(c);
    for (std::size_t i = 0; i < n; ++i)
      if (label[i] == j) ss += (y[i] - m) * (y[i] - m);
    double var = ss / double(c);
    // Singleton or tied clusters get a fraction of the overall spread.
    if (!(var > kMinVariance)) var = total_var / double(k * k);
    comps.push_back(moment_match(family, double(c) / double(n), m, var));
  }
  if (comps.size() < k) throw NumericalError("k-means produced empty clusters");
  std::sort(comps.begin(), comps.end(),
            [](const Component& l, const Component& r) { return l.w > r.w; });
  return comps;
}

EmFitResult em_fit_from(const EmSample& sample, const MixtureFamily& family,
                        std::vector<Component> init, const EmOptions& options) {
  if (init.empty()) throw ValidationError("EM needs at least one initial component");
  std::vector<std::string> warnings;
  for (;;) {
    try {
      auto result = run_em(sample, family, init, options);
      result.warnings.insert(result.warnings.begin(), warnings.begin(), warnings.end());
      return result;
    } catch (const CollapseError& e) {
      if (init.size() == 1) throw NumericalError("EM collapsed to a degenerate single component");
      warnings.push_back("component " + std::to_string(e.component + 1) +
                         " collapsed and was removed; refitting with " +
                         std::to_string(init.size() - 1) + " components");
      init.erase(init.begin() + std::ptrdiff_t(e.component));
      double total = 0.0;
      for (const auto& c : init) total += c.w;
      for (auto& c : init) c.w /= total;
    }
  }
}

EmFitResult em_fit(const EmSample& sample, const MixtureFamily& family, std::size_t k,
                   std::uint64_t seed, const EmOptions& options) {
  if (k < 1) throw ValidationError("number of components must be at least 1");
  if (sample.values.size() < 10 * k)
    throw ValidationError("EM needs at least 10 draws per component");
  std::vector<Component> init = knn_init(sample, family, k, seed);
  if (family.tag() == Family::normal && k > 1) init = student_t_fit(sample.values, init, 200);
  return em_fit_from(sample, family, std::move(init), options);
}

EmFitResult auto_fit(const EmSample& sample, const MixtureFamily& family, std::size_t k_max,
                     std::uint64_t seed, const EmOptions& options) {
  if (k_max < 1) throw ValidationError("k_max must be at least 1");
  std::vector<std::future<EmFitResult>> fits;
  for (std::size_t k = 1; k <= k_max; ++k)
    fits.push_back(std::async(std::launch::async,
                              [&, k] { return em_fit(sample, family, k, seed + k, options); }));
  std::optional<EmFitResult> best;
  std::exception_ptr first_error;
  for (auto& f : fits) {
    try {
      auto r = f.get();
      if (!best || r.aic < best->aic) best = std::move(r);
    } catch (const ValidationError&) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (!best) std::rethrow_exception(first_error);
  return std::move(*best);
}

namespace detail {

std::pair<double, double> beta_mstep(double mean_log, double mean_log1m, double a0, double b0) {
  // Maximizes L(a, b) = lgamma(a+b) - lgamma(a) - lgamma(b) + (a-1) s1 + (b-1) s2,
  // a concave function whose stationarity conditions are the digamma system.
  auto objective = [&](double a, double b) {
    return bm::lgamma(a + b) - bm::lgamma(a) - bm::lgamma(b) + (a - 1.0) * mean_log +
           (b - 1.0) * mean_log1m;
  };
  double a = a0 > 0.0 && std::isfinite(a0) ? a0 : 1.0;
  double b = b0 > 0.0 && std::isfinite(b0) ? b0 : 1.0;
  double f = objective(a, b);
  for (int it = 0; it < 200; ++it) {
    const double psi_ab = bm::digamma(a + b);
    const double g1 = psi_ab - bm::digamma(a) + mean_log;
    const double g2 = psi_ab - bm::digamma(b) + mean_log1m;
    if (std::abs(g1) < 1e-13 && std::abs(g2) < 1e-13) break;
    const double t_ab = bm::trigamma(a + b);
    const double haa = t_ab - bm::trigamma(a);
    const double hbb = t_ab - bm::trigamma(b);
    const double hab = t_ab;
    const double det = haa * hbb - hab * hab;
    // Natural-parameter Newton step (the Hessian is negative definite), taken
    // multiplicatively so that a and b stay positive.
    const double da = -(hbb * g1 - hab * g2) / det;
    const double db = -(haa * g2 - hab * g1) / det;
    double du = da / a;
    double dv = db / b;
    // Close to the optimum the objective no longer resolves the improvement;
    // the pure Newton step is taken there.
    if (std::max(std::abs(g1), std::abs(g2)) < 1e-6) {
      a *= std::exp(du);
      b *= std::exp(dv);
      f = objective(a, b);
      continue;
    }
    double step = 1.0;
    bool moved = false;
    for (int half = 0; half < 60; ++half) {
      const double an = a * std::exp(step * du);
      const double bn = b * std::exp(step * dv);
      const double fn = objective(an, bn);
      if (fn >= f - 1e-15 * std::abs(f)) {
        moved = an != a || bn != b;
        a = an;
        b = bn;
        f = fn;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {a, b};
}

std::pair<double, double> gamma_mstep(double mean, double mean_log) {
  // With b = a / mean the score equations reduce to log a - digamma(a) = c.
  const double c = std::log(mean) - mean_log;
  if (!(c > 0.0)) throw NumericalError("gamma M-step needs E[log y] < log E[y]");
  auto h = [c](double a) { return std::log(a) - bm::digamma(a) - c; };
  double a = (3.0 - c + std::sqrt((c - 3.0) * (c - 3.0) + 24.0 * c)) / (12.0 * c);
  bool ok = false;
  for (int it = 0; it < 100; ++it) {
    const double val = h(a);
    if (std::abs(val) <= 1e-14 * c) {
      ok = true;
      break;
    }
    // Newton on log a: d h / d log a = 1 - a trigamma(a) < 0.
    const double slope = 1.0 - a * bm::trigamma(a);
    const double step = std::clamp(-val / slope, -2.0, 2.0);
    a *= std::exp(step);
    if (!std::isfinite(a) || a <= 0.0) break;
  }
  if (!ok) {
    // h decreases from +inf to -c; bracket and bisect.
    double lo = 1e-12, hi = 1.0;
    while (h(hi) > 0.0) hi *= 2.0;
    a = find_root(h, lo, hi, 1e-15);
  }
  return {a, a / mean};
}

}  // namespace detail

}  // namespace mapkit
