#include "mapkit/map_mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace mapkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTargetAcceptance = 0.44;
constexpr std::size_t kBatch = 50;

std::string row_name(const StudyDataset& data, std::size_t j) {
  return "row " + std::to_string(j + 1) +
         (j < data.labels.size() && !data.labels[j].empty() ? " (" + data.labels[j] + ")" : "");
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  // Linear interpolation between order statistics (type 7).
  const double h = (double(sorted.size()) - 1.0) * p;
  const auto lo = std::size_t(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

// Log-likelihood of one study given its link-scale effect.
class StudyLikelihood {
 public:
  StudyLikelihood(const StudyDataset& data, std::size_t j) {
    const auto& row = data.rows[j];
    if (const auto* b = std::get_if<BinomialData>(&row)) {
      kind_ = Family::beta;
      x_ = double(b->r);
      n_ = double(b->n);
    } else if (const auto* p = std::get_if<PoissonData>(&row)) {
      kind_ = Family::gamma;
      x_ = double(p->count);
      n_ = p->exposure;
      log_n_ = std::log(p->exposure);
    } else {
      kind_ = Family::normal;
      x_ = std::get<NormalData>(row).mean;
      const double se = data.standard_error(j);
      n_ = 1.0 / (se * se);  // precision
    }
  }

  double operator()(double theta) const {
    switch (kind_) {
      case Family::beta: return x_ * theta - n_ * log1p_exp(theta);
      case Family::gamma: return x_ * (log_n_ + theta) - n_ * std::exp(theta);
      case Family::normal: return -0.5 * n_ * (x_ - theta) * (x_ - theta);
    }
    return 0.0;
  }

  bool gaussian() const { return kind_ == Family::normal; }
  double value() const { return x_; }
  double precision() const { return n_; }

  /// Initial value and proposal scale on the link scale.
  std::pair<double, double> start() const {
    switch (kind_) {
      case Family::beta: {
        const double p = (x_ + 0.5) / (n_ + 1.0);
        return {logit(p), 1.0 / std::sqrt(n_ * p * (1.0 - p) + 1.0)};
      }
      case Family::gamma: return {std::log((x_ + 0.5) / n_), 1.0 / std::sqrt(x_ + 1.0)};
      case Family::normal: return {x_, 1.0 / std::sqrt(n_)};
    }
    return {0.0, 1.0};
  }

 private:
  Family kind_ = Family::normal;
  double x_ = 0.0;
  double n_ = 0.0;
  double log_n_ = 0.0;
};

// Random-walk proposal scale tuned in batches during warmup.
struct Adaptive {
  double log_step = 0.0;
  std::size_t accepted = 0;
  std::size_t proposed = 0;
  std::size_t kept_accepted = 0;
  std::size_t kept_proposed = 0;

  double step() const { return std::exp(log_step); }

  void record(bool accept, bool warmup) {
    ++proposed;
    accepted += accept;
    if (!warmup) {
      ++kept_proposed;
      kept_accepted += accept;
    }
  }

  void adapt(std::size_t batch_index) {
    if (proposed == 0) return;
    const double rate = double(accepted) / double(proposed);
    const double delta = std::min(1.0, 1.0 / std::sqrt(double(batch_index)));
    log_step += rate > kTargetAcceptance ? delta : -delta;
    accepted = proposed = 0;
  }

  double rate() const { return kept_proposed ? double(kept_accepted) / double(kept_proposed) : 1.0; }
};

std::mt19937_64 seeded_rng(std::uint64_t seed) {
  std::seed_seq seq{seed & 0xffffffffu, seed >> 32, std::uint64_t(0x9e3779b9)};
  return std::mt19937_64(seq);
}

class Sampler {
 public:
  Sampler(const StudyDataset& data, const HyperPriors& priors, std::uint64_t seed)
      : priors_(priors), rng_(seeded_rng(seed)) {
    for (std::size_t j = 0; j < data.size(); ++j) lik_.emplace_back(data, j);
    init();
  }

  ChainDraws run(std::size_t warmup, std::size_t iter) {
    const std::size_t J = lik_.size();
    ChainDraws out;
    out.mu.reserve(iter);
    out.tau.reserve(iter);
    out.theta_star.reserve(iter);
    out.theta.assign(J, {});
    for (auto& t : out.theta) t.reserve(iter);
    std::normal_distribution<double> z;
    std::size_t batch = 0;
    for (std::size_t t = 0; t < warmup + iter; ++t) {
      const bool warm = t < warmup;
      sweep(warm);
      if (warm && (t + 1) % kBatch == 0) {
        ++batch;
        tau_c_.adapt(batch);
        tau_nc_.adapt(batch);
        shift_.adapt(batch);
        for (auto& a : theta_step_) a.adapt(batch);
      }
      if (warm) continue;
      const double tau = std::exp(log_tau_);
      out.mu.push_back(mu_);
      out.tau.push_back(tau);
      for (std::size_t j = 0; j < J; ++j) out.theta[j].push_back(theta_[j]);
      out.theta_star.push_back(mu_ + tau * z(rng_));
    }
    out.acceptance = {tau_c_.rate(), tau_nc_.rate(), shift_.rate()};
    for (std::size_t j = 0; j < J; ++j)
      out.acceptance.push_back(lik_[j].gaussian() ? 1.0 : theta_step_[j].rate());
    return out;
  }

 private:
  void init() {
    std::normal_distribution<double> z;
    const std::size_t J = lik_.size();
    mu_ = priors_.mu_mean + priors_.mu_sd * z(rng_);
    double tau = priors_.tau.draw(rng_);
    if (!(tau > 0.0)) tau = 1e-3;
    log_tau_ = std::log(tau);
    theta_.resize(J);
    theta_step_.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
      const auto [start, scale] = lik_[j].start();
      theta_[j] = start + 0.5 * scale * z(rng_);
      theta_step_[j].log_step = std::log(2.4 * scale);
    }
    tau_c_.log_step = std::log(0.5);
    tau_nc_.log_step = std::log(0.5);
    shift_.log_step = std::log(0.5);
  }

  double log_prior_tau(double log_tau) const {
    return priors_.tau.log_density(std::exp(log_tau)) + log_tau;  // Jacobian of tau = exp(l)
  }

  double random_effect_sq() const {
    double s = 0.0;
    for (double t : theta_) s += (t - mu_) * (t - mu_);
    return s;
  }

  bool accept(double log_ratio) {
    if (log_ratio >= 0.0) return true;
    return std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng_)) < log_ratio;
  }

  void sweep(bool warm) {
    std::normal_distribution<double> z;
    const std::size_t J = lik_.size();
    double tau = std::exp(log_tau_);
    double prec_re = 1.0 / (tau * tau);

    // Study effects.
    for (std::size_t j = 0; j < J; ++j) {
      if (lik_[j].gaussian()) {
        const double prec = lik_[j].precision() + prec_re;
        const double mean = (lik_[j].precision() * lik_[j].value() + prec_re * mu_) / prec;
        theta_[j] = mean + z(rng_) / std::sqrt(prec);
        continue;
      }
      const double cur = theta_[j];
      const double prop = cur + theta_step_[j].step() * z(rng_);
      const double lr = lik_[j](prop) - lik_[j](cur) -
                        0.5 * prec_re * ((prop - mu_) * (prop - mu_) - (cur - mu_) * (cur - mu_));
      const bool ok = accept(lr);
      if (ok) theta_[j] = prop;
      theta_step_[j].record(ok, warm);
    }

    // Intercept, exact conditional.
    {
      const double p0 = 1.0 / (priors_.mu_sd * priors_.mu_sd);
      const double prec = double(J) * prec_re + p0;
      const double sum = std::accumulate(theta_.begin(), theta_.end(), 0.0);
      const double mean = (prec_re * sum + p0 * priors_.mu_mean) / prec;
      mu_ = mean + z(rng_) / std::sqrt(prec);
    }

    // log tau given the study effects.
    {
      const double ss = random_effect_sq();
      const double prop = log_tau_ + tau_c_.step() * z(rng_);
      auto target = [&](double l) {
        return log_prior_tau(l) - double(J) * l - 0.5 * ss * std::exp(-2.0 * l);
      };
      const double lr = target(prop) - target(log_tau_);
      const bool ok = std::isfinite(lr) && accept(lr);
      if (ok) log_tau_ = prop;
      tau_c_.record(ok, warm);
    }

    // log tau with the standardized effects (theta - mu) / tau held fixed;
    // the normal terms cancel against the Jacobian of the rescaling.
    {
      const double prop = log_tau_ + tau_nc_.step() * z(rng_);
      const double scale = std::exp(prop - log_tau_);
      double lr = log_prior_tau(prop) - log_prior_tau(log_tau_);
      std::vector<double> moved(J);
      for (std::size_t j = 0; j < J; ++j) {
        moved[j] = mu_ + scale * (theta_[j] - mu_);
        lr += lik_[j](moved[j]) - lik_[j](theta_[j]);
      }
      const bool ok = std::isfinite(lr) && accept(lr);
      if (ok) {
        log_tau_ = prop;
        theta_ = std::move(moved);
      }
      tau_nc_.record(ok, warm);
    }

    // Common shift of mu and all study effects.
    {
      const double d = shift_.step() * z(rng_);
      const double p0 = 1.0 / (priors_.mu_sd * priors_.mu_sd);
      double lr = -0.5 * p0 *
                  ((mu_ + d - priors_.mu_mean) * (mu_ + d - priors_.mu_mean) -
                   (mu_ - priors_.mu_mean) * (mu_ - priors_.mu_mean));
      for (std::size_t j = 0; j < J; ++j) lr += lik_[j](theta_[j] + d) - lik_[j](theta_[j]);
      const bool ok = std::isfinite(lr) && accept(lr);
      if (ok) {
        mu_ += d;
        for (auto& t : theta_) t += d;
      }
      shift_.record(ok, warm);
    }
  }

  HyperPriors priors_;
  std::mt19937_64 rng_;
  std::vector<StudyLikelihood> lik_;
  double mu_ = 0.0;
  double log_tau_ = 0.0;
  std::vector<double> theta_;
  std::vector<Adaptive> theta_step_;
  Adaptive tau_c_, tau_nc_, shift_;
};

std::vector<std::vector<double>> per_chain(const MapAnalysis& a,
                                           const std::function<const std::vector<double>&(const ChainDraws&)>& get) {
  std::vector<std::vector<double>> out;
  for (const auto& c : a.chains) out.push_back(get(c));
  return out;
}

std::vector<double> pool(const MapAnalysis& a,
                         const std::function<const std::vector<double>&(const ChainDraws&)>& get) {
  std::vector<double> out;
  for (const auto& c : a.chains) {
    const auto& v = get(c);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Link StudyDataset::link() const {
  switch (family.tag()) {
    case Family::beta: return Link::logit;
    case Family::gamma: return Link::log;
    case Family::normal: return Link::identity;
  }
  return Link::identity;
}

void StudyDataset::validate() const {
  if (rows.empty()) throw ValidationError("study dataset is empty");
  if (!labels.empty() && labels.size() != rows.size())
    throw ValidationError("study dataset needs one label per row");
  if (family.tag() == Family::gamma && family.likelihood() != GammaLikelihood::poisson)
    throw ValidationError("meta-analysis of gamma endpoints needs the poisson likelihood");
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& row = rows[j];
    const bool match = (family.tag() == Family::beta && std::holds_alternative<BinomialData>(row)) ||
                       (family.tag() == Family::normal && std::holds_alternative<NormalData>(row)) ||
                       (family.tag() == Family::gamma && std::holds_alternative<PoissonData>(row));
    if (!match) throw ValidationError(row_name(*this, j) + ": outcome type does not match the endpoint");
    try {
      mapkit::validate(row);
    } catch (const ValidationError& e) {
      throw ValidationError(row_name(*this, j) + ": " + e.what());
    }
    if (const auto* b = std::get_if<BinomialData>(&row); b && b->n < 1)
      throw ValidationError(row_name(*this, j) + ": binomial rows need n >= 1");
  }
}

double StudyDataset::standard_error(std::size_t j) const {
  const auto& d = std::get<NormalData>(rows.at(j));
  return family.sampling_sd() / std::sqrt(d.n);
}

std::string_view to_string(TauPriorKind kind) {
  switch (kind) {
    case TauPriorKind::half_normal: return "half_normal";
    case TauPriorKind::truncated_normal: return "truncated_normal";
    case TauPriorKind::uniform: return "uniform";
    case TauPriorKind::log_normal: return "log_normal";
  }
  return "half_normal";
}

TauPriorKind tau_prior_from_string(std::string_view name) {
  if (name == "half_normal" || name == "HalfNormal") return TauPriorKind::half_normal;
  if (name == "truncated_normal" || name == "TruncNormal") return TauPriorKind::truncated_normal;
  if (name == "uniform" || name == "Uniform") return TauPriorKind::uniform;
  if (name == "log_normal" || name == "LogNormal") return TauPriorKind::log_normal;
  throw ValidationError("unknown tau prior '" + std::string(name) + "'");
}

void TauPrior::validate() const {
  switch (kind) {
    case TauPriorKind::half_normal:
      if (!(p1 > 0.0)) throw ValidationError("half-normal tau prior needs a positive scale");
      break;
    case TauPriorKind::truncated_normal:
      if (!(p2 > 0.0) || !std::isfinite(p1))
        throw ValidationError("truncated-normal tau prior needs a finite mean and positive sd");
      break;
    case TauPriorKind::uniform:
      if (!(p1 >= 0.0 && p2 > p1)) throw ValidationError("uniform tau prior needs 0 <= lower < upper");
      break;
    case TauPriorKind::log_normal:
      if (!(p2 > 0.0) || !std::isfinite(p1))
        throw ValidationError("log-normal tau prior needs a finite meanlog and positive sdlog");
      break;
  }
}

double TauPrior::log_density(double tau) const {
  if (!(tau >= 0.0)) return -kInf;
  switch (kind) {
    case TauPriorKind::half_normal: return -0.5 * (tau / p1) * (tau / p1);
    case TauPriorKind::truncated_normal: return -0.5 * ((tau - p1) / p2) * ((tau - p1) / p2);
    case TauPriorKind::uniform: return tau >= p1 && tau <= p2 ? 0.0 : -kInf;
    case TauPriorKind::log_normal: {
      if (tau == 0.0) return -kInf;
      const double z = (std::log(tau) - p1) / p2;
      return -0.5 * z * z - std::log(tau);
    }
  }
  return -kInf;
}

double TauPrior::draw(std::mt19937_64& rng) const {
  std::normal_distribution<double> z;
  switch (kind) {
    case TauPriorKind::half_normal: return std::abs(p1 * z(rng));
    case TauPriorKind::truncated_normal:
      for (int i = 0; i < 10000; ++i) {
        const double t = p1 + p2 * z(rng);
        if (t >= 0.0) return t;
      }
      return std::abs(p1) + p2;
    case TauPriorKind::uniform: return std::uniform_real_distribution<double>(p1, p2)(rng);
    case TauPriorKind::log_normal: return std::exp(p1 + p2 * z(rng));
  }
  return 1.0;
}

void HyperPriors::validate() const {
  if (!std::isfinite(mu_mean) || !(mu_sd > 0.0))
    throw ValidationError("intercept prior needs a finite mean and positive sd");
  tau.validate();
}

DrawSummary summarize_draws(std::vector<double> draws) {
  DrawSummary s;
  if (draws.empty()) return s;
  const double n = double(draws.size());
  s.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : draws) ss += (v - s.mean) * (v - s.mean);
  s.sd = draws.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(draws.begin(), draws.end());
  s.q025 = quantile_sorted(draws, 0.025);
  s.q50 = quantile_sorted(draws, 0.5);
  s.q975 = quantile_sorted(draws, 0.975);
  return s;
}

std::vector<double> MapAnalysis::pooled_mu() const {
  return pool(*this, [](const ChainDraws& c) -> const std::vector<double>& { return c.mu; });
}

std::vector<double> MapAnalysis::pooled_tau() const {
  return pool(*this, [](const ChainDraws& c) -> const std::vector<double>& { return c.tau; });
}

std::vector<double> MapAnalysis::pooled_theta(std::size_t study) const {
  return pool(*this, [study](const ChainDraws& c) -> const std::vector<double>& { return c.theta.at(study); });
}

std::vector<double> MapAnalysis::pooled_theta_star() const {
  return pool(*this, [](const ChainDraws& c) -> const std::vector<double>& { return c.theta_star; });
}

std::vector<double> MapAnalysis::pooled_theta_star_response() const {
  auto v = pooled_theta_star();
  for (auto& x : v) x = inverse_link(link(), x);
  return v;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (chains.empty()) return nan;
  const std::size_t n = chains.front().size() / 2;
  if (n < 2) return nan;
  for (const auto& c : chains)
    if (c.size() / 2 != n) return nan;
  if (chains.size() > 1 &&
      std::all_of(chains.begin() + 1, chains.end(), [&](const auto& c) { return c == chains.front(); }))
    return nan;

  std::vector<double> means, vars;
  for (const auto& c : chains) {
    for (int half = 0; half < 2; ++half) {
      // The first half drops the middle draw of odd-length chains.
      const auto begin = c.begin() + (half == 0 ? 0 : std::ptrdiff_t(c.size() - n));
      const double m = std::accumulate(begin, begin + std::ptrdiff_t(n), 0.0) / double(n);
      double ss = 0.0;
      for (auto it = begin; it != begin + std::ptrdiff_t(n); ++it) ss += (*it - m) * (*it - m);
      means.push_back(m);
      vars.push_back(ss / double(n - 1));
    }
  }
  const double m_count = double(means.size());
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m_count;
  if (!(w > 0.0)) return nan;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m_count;
  double b = 0.0;
  for (double m : means) b += (m - grand) * (m - grand);
  b *= double(n) / (m_count - 1.0);
  const double var_plus = (double(n) - 1.0) / double(n) * w + b / double(n);
  return std::sqrt(var_plus / w);
}

double effective_draws(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m == 0) return 0.0;
  const std::size_t n = chains.front().size();
  if (n < 4) return double(m * n);
  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = std::accumulate(chains[c].begin(), chains[c].end(), 0.0) / double(n);
    double ss = 0.0;
    for (double v : chains[c]) ss += (v - means[c]) * (v - means[c]);
    vars[c] = ss / double(n - 1);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / double(m);
  if (!(w > 0.0)) return 0.0;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / double(m);
  double b = 0.0;
  if (m > 1) {
    for (double v : means) b += (v - grand) * (v - grand);
    b *= double(n) / double(m - 1);
  }
  const double var_plus = (double(n) - 1.0) / double(n) * w + b / double(n);

  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t + lag < n; ++t)
        s += (chains[c][t] - means[c]) * (chains[c][t + lag] - means[c]);
      acov += s / double(n);
    }
    acov /= double(m);
    return 1.0 - (w - acov) / var_plus;
  };
  // Geyer's initial positive, monotone sequence of paired autocorrelations.
  double tau = -1.0;
  double prev_pair = kInf;
  for (std::size_t lag = 0; lag + 1 < n; lag += 2) {
    double pair = rho(lag) + rho(lag + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(double(m * n)));
  return double(m * n) / tau;
}

McmcDiagnostics diagnostics(const MapAnalysis& analysis) {
  McmcDiagnostics d;
  auto add = [&](std::string name, std::vector<std::vector<double>> chains) {
    d.parameters.push_back({std::move(name), split_rhat(chains), effective_draws(chains)});
  };
  add("mu", per_chain(analysis, [](const ChainDraws& c) -> const std::vector<double>& { return c.mu; }));
  add("tau", per_chain(analysis, [](const ChainDraws& c) -> const std::vector<double>& { return c.tau; }));
  for (std::size_t j = 0; j < analysis.data.size(); ++j) {
    const std::string label = j < analysis.data.labels.size() ? analysis.data.labels[j] : std::to_string(j + 1);
    add("theta[" + label + "]",
        per_chain(analysis, [j](const ChainDraws& c) -> const std::vector<double>& { return c.theta[j]; }));
  }
  add("theta_star",
      per_chain(analysis, [](const ChainDraws& c) -> const std::vector<double>& { return c.theta_star; }));

  d.max_rhat = 0.0;
  d.min_ess = kInf;
  bool undefined = false;
  for (const auto& p : d.parameters) {
    if (std::isnan(p.rhat))
      undefined = true;
    else
      d.max_rhat = std::max(d.max_rhat, p.rhat);
    d.min_ess = std::min(d.min_ess, p.ess);
  }
  if (undefined) {
    d.max_rhat = std::numeric_limits<double>::quiet_NaN();
    d.warning = true;
    d.messages.push_back("Rhat is undefined (identical or constant chains)");
  } else if (d.max_rhat > 1.1) {
    d.warning = true;
    d.messages.push_back("maximal Rhat exceeds 1.1");
  }
  if (d.min_ess < 100.0) {
    d.warning = true;
    d.messages.push_back("effective sample size below 100 for at least one parameter");
  }
  if (!analysis.chains.empty()) {
    d.mean_acceptance.assign(analysis.chains.front().acceptance.size(), 0.0);
    for (const auto& c : analysis.chains)
      for (std::size_t i = 0; i < c.acceptance.size(); ++i)
        d.mean_acceptance[i] += c.acceptance[i] / double(analysis.chains.size());
  }
  return d;
}

MapAnalysis gmap(const StudyDataset& data, const HyperPriors& priors, const McmcOptions& options) {
  data.validate();
  priors.validate();
  if (options.chains < 1) throw ValidationError("at least one chain is required");
  if (options.iter < 1) throw ValidationError("at least one kept iteration is required");

  MapAnalysis analysis{data, priors, options, {}, {}};
  std::vector<std::future<ChainDraws>> runs;
  for (std::size_t c = 0; c < options.chains; ++c) {
    const std::uint64_t sub = options.replicate_chains ? options.seed : options.seed * 1000003ULL + c;
    runs.push_back(std::async(std::launch::async, [&, sub] {
      Sampler s(data, priors, sub);
      return s.run(options.warmup, options.iter);
    }));
  }
  for (auto& r : runs) analysis.chains.push_back(r.get());
  analysis.diagnostics = diagnostics(analysis);
  return analysis;
}

std::vector<ShrinkageRow> shrinkage_estimates(const MapAnalysis& analysis) {
  std::vector<ShrinkageRow> rows;
  const Link link = analysis.link();
  auto row = [&](std::string label, std::vector<double> draws) {
    for (auto& x : draws) x = inverse_link(link, x);
    const auto s = summarize_draws(std::move(draws));
    rows.push_back({std::move(label), s.q50, s.q025, s.q975});
  };
  for (std::size_t j = 0; j < analysis.data.size(); ++j)
    row(j < analysis.data.labels.size() ? analysis.data.labels[j] : std::to_string(j + 1),
        analysis.pooled_theta(j));
  row("typical", analysis.pooled_mu());
  row("MAP", analysis.pooled_theta_star());
  return rows;
}

EmSample map_prior_sample(const MapAnalysis& analysis) {
  return make_em_sample(analysis.pooled_theta_star_response(), analysis.data.family);
}

}  // namespace mapkit
