#include "mapkit/serialize.hpp"

#include <cmath>
#include <limits>

namespace mapkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json components_json(std::span<const Component> comps) {
  json arr = json::array();
  for (const auto& c : comps) arr.push_back({c.w, c.a, c.b});
  return arr;
}

std::vector<Component> components_from(const json& arr) {
  if (!arr.is_array()) throw ValidationError("'components' must be an array of [w, a, b] triplets");
  std::vector<Component> comps;
  for (const auto& t : arr) {
    if (!t.is_array() || t.size() != 3)
      throw ValidationError("each mixture component must be a [w, a, b] triplet");
    comps.push_back({t[0].get<double>(), t[1].get<double>(), t[2].get<double>()});
  }
  return comps;
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T field_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key);
}

json flatten(const std::vector<std::vector<double>>& per_chain) {
  json arr = json::array();
  for (const auto& c : per_chain)
    for (double v : c) arr.push_back(v);
  return arr;
}

std::vector<std::vector<double>> unflatten(const json& arr, std::size_t chains, std::size_t iter) {
  const auto flat = arr.get<std::vector<double>>();
  if (flat.size() != chains * iter) throw ValidationError("draw array length does not match chains x iter");
  std::vector<std::vector<double>> out(chains);
  for (std::size_t c = 0; c < chains; ++c)
    out[c].assign(flat.begin() + std::ptrdiff_t(c * iter), flat.begin() + std::ptrdiff_t((c + 1) * iter));
  return out;
}

}  // namespace

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_or_nan(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

// ---------------------------------------------------------------------------
// Mixtures

void to_json(json& j, const MixtureFamily& f) {
  j = json{{"family", to_string(f.tag())},
           {"sigma", f.sigma() ? json(*f.sigma()) : json(nullptr)},
           {"likelihood", f.likelihood() ? json(to_string(*f.likelihood())) : json(nullptr)}};
}

MixtureFamily family_from_json(const json& j) {
  const Family tag = family_from_string(field<std::string>(j, "family"));
  switch (tag) {
    case Family::normal:
      if (!j.contains("sigma") || j["sigma"].is_null())
        throw ValidationError("normal mixtures need the sampling standard deviation 'sigma'");
      return MixtureFamily::normal(j["sigma"].get<double>());
    case Family::beta: return MixtureFamily::beta();
    case Family::gamma:
      return MixtureFamily::gamma(likelihood_from_string(field_or<std::string>(j, "likelihood", "poisson")));
  }
  return MixtureFamily::beta();
}

void to_json(json& j, const Mixture& m) {
  to_json(j, m.family());
  j["components"] = components_json(m.components());
}

Mixture mixture_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("a mixture must be a JSON object");
  return Mixture(family_from_json(j), components_from(field<json>(j, "components")));
}

void to_json(json& j, const MixtureSummary& s) {
  j = json{{"mean", s.mean}, {"sd", s.sd}, {"probabilities", s.probabilities}, {"quantiles", s.quantiles}};
}

// ---------------------------------------------------------------------------
// Data and predictive distributions

void to_json(json& j, const ObservedData& d) {
  std::visit(
      [&j](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, BinomialData>)
          j = json{{"type", "binomial"}, {"r", v.r}, {"n", v.n}};
        else if constexpr (std::is_same_v<T, NormalData>)
          j = json{{"type", "normal"}, {"mean", v.mean}, {"n", v.n}};
        else
          j = json{{"type", "poisson"}, {"count", v.count}, {"exposure", v.exposure}};
      },
      d);
}

ObservedData observed_data_from_json(const json& j) {
  const auto type = field<std::string>(j, "type");
  ObservedData d;
  if (type == "binomial")
    d = BinomialData{field<long>(j, "r"), field<long>(j, "n")};
  else if (type == "normal")
    d = NormalData{field<double>(j, "mean"), field<double>(j, "n")};
  else if (type == "poisson")
    d = PoissonData{field<long>(j, "count"), field<double>(j, "exposure")};
  else
    throw ValidationError("unknown data type '" + type + "'");
  validate(d);
  return d;
}

void to_json(json& j, const PredictiveMixture& p) {
  j = json{{"family", to_string(p.family)}, {"n", p.n}, {"components", components_json(p.components)}};
}

void from_json(const json& j, PredictiveMixture& p) {
  p.family = predictive_family_from_string(field<std::string>(j, "family"));
  p.n = field<double>(j, "n");
  p.components = components_from(field<json>(j, "components"));
}

// ---------------------------------------------------------------------------
// EM and ESS

void to_json(json& j, const EmFitResult& r) {
  j = json{{"mixture", r.mixture},   {"k", r.mixture.size()}, {"loglik", r.loglik},
           {"aic", r.aic},           {"iterations", r.iterations}, {"converged", r.converged},
           {"counts", r.counts},     {"warnings", r.warnings}};
  if (!r.trace.empty()) j["trace"] = r.trace;
}

EmFitResult em_fit_result_from_json(const json& j) {
  EmFitResult r{mixture_from_json(field<json>(j, "mixture")),
                field<double>(j, "loglik"),
                field<std::size_t>(j, "iterations"),
                field<bool>(j, "converged"),
                field<std::vector<double>>(j, "counts"),
                field<double>(j, "aic"),
                field_or<std::vector<double>>(j, "trace", {}),
                field_or<std::vector<std::string>>(j, "warnings", {})};
  return r;
}

void to_json(json& j, const EssResult& r) {
  j = json{{"method", to_string(r.method)},
           {"value", finite_or_null(r.value)},
           {"diverged", r.diverged},
           {"quadrature_error", r.quadrature_error},
           {"convention", r.convention}};
  if (r.method == EssMethod::morita) j["reference"] = r.reference;
}

void from_json(const json& j, EssResult& r) {
  r.method = ess_method_from_string(field<std::string>(j, "method"));
  r.diverged = field_or<bool>(j, "diverged", false);
  r.value = j.at("value").is_null() ? (r.diverged ? std::numeric_limits<double>::infinity() : kNaN)
                                    : j.at("value").get<double>();
  r.quadrature_error = field_or<double>(j, "quadrature_error", 0.0);
  r.reference = field_or<double>(j, "reference", 0.0);
  r.convention = field_or<std::string>(j, "convention", "");
}

// ---------------------------------------------------------------------------
// Meta-analysis

void to_json(json& j, const TauPrior& t) {
  j = json{{"dist", to_string(t.kind)}, {"params", {t.p1, t.p2}}};
}

void from_json(const json& j, TauPrior& t) {
  t.kind = tau_prior_from_string(field<std::string>(j, "dist"));
  const auto params = field<std::vector<double>>(j, "params");
  if (params.empty() || params.size() > 2) throw ValidationError("tau prior takes one or two parameters");
  t.p1 = params[0];
  t.p2 = params.size() > 1 ? params[1] : 0.0;
  t.validate();
}

void to_json(json& j, const HyperPriors& h) {
  j = json{{"mu_prior", {h.mu_mean, h.mu_sd}}, {"tau_prior", h.tau}};
}

void from_json(const json& j, HyperPriors& h) {
  if (j.contains("mu_prior")) {
    const auto mp = j["mu_prior"].get<std::vector<double>>();
    if (mp.size() != 2) throw ValidationError("mu_prior must be [mean, sd]");
    h.mu_mean = mp[0];
    h.mu_sd = mp[1];
  }
  if (j.contains("tau_prior")) h.tau = j["tau_prior"].get<TauPrior>();
  h.validate();
}

void to_json(json& j, const McmcOptions& o) {
  j = json{{"chains", o.chains}, {"warmup", o.warmup}, {"iter", o.iter}, {"seed", o.seed}};
  if (o.replicate_chains) j["replicate_chains"] = true;
}

void from_json(const json& j, McmcOptions& o) {
  o.chains = field_or<std::size_t>(j, "chains", o.chains);
  o.warmup = field_or<std::size_t>(j, "warmup", o.warmup);
  o.iter = field_or<std::size_t>(j, "iter", o.iter);
  o.seed = field_or<std::uint64_t>(j, "seed", o.seed);
  o.replicate_chains = field_or<bool>(j, "replicate_chains", false);
}

void to_json(json& j, const StudyDataset& d) {
  json rows = json::array();
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    json row;
    row["study"] = i < d.labels.size() ? d.labels[i] : std::to_string(i + 1);
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, BinomialData>) {
            row["r"] = v.r;
            row["n"] = v.n;
          } else if constexpr (std::is_same_v<T, NormalData>) {
            row["y"] = v.mean;
            row["se"] = d.standard_error(i);
            row["n"] = v.n;
          } else {
            row["count"] = v.count;
            row["exposure"] = v.exposure;
          }
        },
        d.rows[i]);
    rows.push_back(row);
  }
  j = json{{"family", d.family}, {"rows", rows}};
}

StudyDataset study_dataset_from_json(const json& j) {
  StudyDataset d;
  d.family = family_from_json(field<json>(j, "family"));
  for (const auto& row : field<json>(j, "rows")) {
    d.labels.push_back(field<std::string>(row, "study"));
    switch (d.family.tag()) {
      case Family::beta: d.rows.push_back(BinomialData{field<long>(row, "r"), field<long>(row, "n")}); break;
      case Family::normal:
        if (row.contains("n"))
          d.rows.push_back(NormalData{field<double>(row, "y"), field<double>(row, "n")});
        else
          d.rows.push_back(NormalData::from_se(field<double>(row, "y"), field<double>(row, "se"),
                                               d.family.sampling_sd()));
        break;
      case Family::gamma:
        d.rows.push_back(PoissonData{field<long>(row, "count"), field<double>(row, "exposure")});
        break;
    }
  }
  d.validate();
  return d;
}

void to_json(json& j, const DrawSummary& s) {
  j = json{{"mean", s.mean}, {"sd", s.sd}, {"q2.5", s.q025}, {"q50", s.q50}, {"q97.5", s.q975}};
}

void from_json(const json& j, DrawSummary& s) {
  s.mean = field<double>(j, "mean");
  s.sd = field<double>(j, "sd");
  s.q025 = field<double>(j, "q2.5");
  s.q50 = field<double>(j, "q50");
  s.q975 = field<double>(j, "q97.5");
}

void to_json(json& j, const McmcDiagnostics& d) {
  json params = json::array();
  for (const auto& p : d.parameters)
    params.push_back({{"name", p.name}, {"rhat", finite_or_null(p.rhat)}, {"ess", p.ess}});
  j = json{{"max_rhat", finite_or_null(d.max_rhat)},
           {"min_ess", d.min_ess},
           {"parameters", params},
           {"acceptance", d.mean_acceptance},
           {"warning", d.warning},
           {"messages", d.messages}};
}

void from_json(const json& j, McmcDiagnostics& d) {
  d.max_rhat = number_or_nan(j.at("max_rhat"));
  d.min_ess = field<double>(j, "min_ess");
  d.parameters.clear();
  for (const auto& p : field<json>(j, "parameters"))
    d.parameters.push_back({field<std::string>(p, "name"), number_or_nan(p.at("rhat")), field<double>(p, "ess")});
  d.mean_acceptance = field<std::vector<double>>(j, "acceptance");
  d.warning = field<bool>(j, "warning");
  d.messages = field<std::vector<std::string>>(j, "messages");
}

void to_json(json& j, const ShrinkageRow& r) {
  j = json{{"label", r.label}, {"median", r.median}, {"lower", r.lower}, {"upper", r.upper}};
}

void from_json(const json& j, ShrinkageRow& r) {
  r.label = field<std::string>(j, "label");
  r.median = field<double>(j, "median");
  r.lower = field<double>(j, "lower");
  r.upper = field<double>(j, "upper");
}

json map_analysis_to_json(const MapAnalysis& a, bool include_draws) {
  json j;
  j["data"] = a.data;
  j["link"] = to_string(a.link());
  j["priors"] = a.priors;
  j["options"] = a.options;
  j["summary"] = {{"theta_star", summarize_draws(a.pooled_theta_star_response())},
                  {"theta_star_link", summarize_draws(a.pooled_theta_star())},
                  {"mu", summarize_draws(a.pooled_mu())},
                  {"tau", summarize_draws(a.pooled_tau())}};
  j["shrinkage"] = shrinkage_estimates(a);
  j["diagnostics"] = a.diagnostics;
  if (include_draws) {
    std::vector<std::vector<double>> mu, tau, star, acc;
    for (const auto& c : a.chains) {
      mu.push_back(c.mu);
      tau.push_back(c.tau);
      star.push_back(c.theta_star);
      acc.push_back(c.acceptance);
    }
    json theta = json::array();
    for (std::size_t s = 0; s < a.data.size(); ++s) {
      std::vector<std::vector<double>> per;
      for (const auto& c : a.chains) per.push_back(c.theta[s]);
      theta.push_back(flatten(per));
    }
    j["draws"] = {{"chains", a.chains.size()},
                  {"iter", a.chains.empty() ? 0 : a.chains.front().mu.size()},
                  {"mu", flatten(mu)},
                  {"tau", flatten(tau)},
                  {"theta", theta},
                  {"theta_star", flatten(star)},
                  {"acceptance", acc}};
  }
  return j;
}

MapAnalysis map_analysis_from_json(const json& j) {
  if (!j.contains("draws")) throw ValidationError("MAP analysis document does not contain draws");
  MapAnalysis a{study_dataset_from_json(field<json>(j, "data")), field<HyperPriors>(j, "priors"),
                field<McmcOptions>(j, "options"), {}, {}};
  const json& d = j["draws"];
  const auto chains = field<std::size_t>(d, "chains");
  const auto iter = field<std::size_t>(d, "iter");
  const auto mu = unflatten(d["mu"], chains, iter);
  const auto tau = unflatten(d["tau"], chains, iter);
  const auto star = unflatten(d["theta_star"], chains, iter);
  const auto acc = field<std::vector<std::vector<double>>>(d, "acceptance");
  if (d["theta"].size() != a.data.size()) throw ValidationError("draws do not match the number of studies");
  std::vector<std::vector<std::vector<double>>> theta;
  for (const auto& t : d["theta"]) theta.push_back(unflatten(t, chains, iter));
  for (std::size_t c = 0; c < chains; ++c) {
    ChainDraws cd;
    cd.mu = mu[c];
    cd.tau = tau[c];
    cd.theta_star = star[c];
    for (auto& t : theta) cd.theta.push_back(t[c]);
    cd.acceptance = c < acc.size() ? acc[c] : std::vector<double>{};
    a.chains.push_back(std::move(cd));
  }
  a.diagnostics = diagnostics(a);
  return a;
}

// ---------------------------------------------------------------------------
// Designs

void to_json(json& j, const DecisionFunction& d) {
  json crit = json::array();
  for (const auto& c : d.criteria) crit.push_back({{"p", c.p}, {"q", c.q}});
  j = json{{"arity", d.arity == Arity::one_sample ? "one_sample" : "two_sample"},
           {"criteria", crit},
           {"lower_tail", d.lower_tail},
           {"link", to_string(d.link)}};
}

void from_json(const json& j, DecisionFunction& d) {
  const auto arity = field_or<std::string>(j, "arity", "two_sample");
  if (arity != "one_sample" && arity != "two_sample")
    throw ValidationError("decision arity must be 'one_sample' or 'two_sample'");
  std::vector<double> p, q;
  if (j.contains("criteria")) {
    for (const auto& c : j["criteria"]) {
      p.push_back(field<double>(c, "p"));
      q.push_back(field<double>(c, "q"));
    }
  } else {
    p = field<std::vector<double>>(j, "p");
    q = field<std::vector<double>>(j, "q");
  }
  const bool lower = field_or<bool>(j, "lower_tail", true);
  if (arity == "one_sample")
    d = decision1S(p, q, lower);
  else
    d = decision2S(p, q, lower, link_from_string(field_or<std::string>(j, "link", "identity")));
}

void to_json(json& j, const Design& d) {
  j = json{{"decision", d.decision},
           {"prior1", d.prior1},
           {"n1", d.n1},
           {"prior2", d.prior2 ? json(*d.prior2) : json(nullptr)},
           {"n2", d.n2}};
}

Design design_from_json(const json& j) {
  Design d{field<DecisionFunction>(j, "decision"), mixture_from_json(field<json>(j, "prior1")),
           field<double>(j, "n1"), std::nullopt, field_or<double>(j, "n2", 1.0)};
  if (j.contains("prior2") && !j["prior2"].is_null()) d.prior2 = mixture_from_json(j["prior2"]);
  d.validate();
  return d;
}

void to_json(json& j, const CriticalValue& c) {
  j = json{{"status", to_string(c.status)}, {"critical", finite_or_null(c.critical)}};
}

void from_json(const json& j, CriticalValue& c) {
  const auto s = field<std::string>(j, "status");
  c.status = s == "empty" ? BoundaryStatus::empty : s == "full" ? BoundaryStatus::full : BoundaryStatus::regular;
  c.critical = number_or_nan(j.at("critical"));
}

void to_json(json& j, const Boundary& b) {
  j = json{{"arity", b.arity == Arity::one_sample ? "one_sample" : "two_sample"},
           {"success_side", b.upper_side ? "upper" : "lower"}};
  if (b.arity == Arity::one_sample) {
    j["critical"] = b.one_sample;
  } else {
    j["y2"] = b.y2;
    j["critical_y1"] = b.critical_y1;
    j["monotone"] = b.monotone;
  }
}

void from_json(const json& j, Boundary& b) {
  b.arity = field<std::string>(j, "arity") == "one_sample" ? Arity::one_sample : Arity::two_sample;
  b.upper_side = field<std::string>(j, "success_side") == "upper";
  if (b.arity == Arity::one_sample) {
    b.one_sample = field<CriticalValue>(j, "critical");
  } else {
    b.y2 = field<std::vector<double>>(j, "y2");
    b.critical_y1 = field<std::vector<CriticalValue>>(j, "critical_y1");
    b.monotone = field<bool>(j, "monotone");
  }
}

}  // namespace mapkit
