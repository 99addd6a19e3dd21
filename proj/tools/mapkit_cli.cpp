#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mapkit/reports.hpp"

using namespace mapkit;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kValidation = 2, kNumerical = 3 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string format = "json";
  bool verbose = false;
};

struct FamilyArgs {
  std::string family = "beta";
  std::optional<double> sigma;
  std::string likelihood = "poisson";

  MixtureFamily resolve() const {
    switch (family_from_string(family)) {
      case Family::beta: return MixtureFamily::beta();
      case Family::gamma: return MixtureFamily::gamma(likelihood_from_string(likelihood));
      case Family::normal:
        if (!sigma) throw ValidationError("--sigma is required for the normal family");
        return MixtureFamily::normal(*sigma);
    }
    return MixtureFamily::beta();
  }
};

void add_family_options(CLI::App* cmd, FamilyArgs& f) {
  cmd->add_option("--family", f.family, "beta, normal or gamma")->capture_default_str();
  cmd->add_option("--sigma", f.sigma, "sampling standard deviation (normal family)");
  cmd->add_option("--likelihood", f.likelihood, "gamma likelihood: poisson or exponential")->capture_default_str();
}

/// CSV text of a table given as rows of JSON scalars.
std::string csv_table(const std::vector<std::string>& header, const json& rows) {
  std::ostringstream s;
  s.precision(10);
  for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
  s << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s << ',';
      const auto& v = row[i];
      if (v.is_null())
        s << "NA";
      else if (v.is_string())
        s << v.get<std::string>();
      else if (v.is_number_float())
        s << v.get<double>();
      else
        s << v.dump();
    }
    s << '\n';
  }
  return s.str();
}

json mixture_rows(const Mixture& m) {
  json rows = json::array();
  for (const auto& c : m.components()) rows.push_back({c.w, c.a, c.b});
  return rows;
}

std::string mixture_csv(const Mixture& m) { return csv_table({"w", "a", "b"}, mixture_rows(m)); }

class Output {
 public:
  explicit Output(const Globals& g) : g_(g) {
    if (g.format != "json" && g.format != "csv") throw ValidationError("--format must be json or csv");
  }
  bool csv() const { return g_.format == "csv"; }

  void emit(const json& j, const std::string& csv_text = {}) const {
    std::string text;
    if (csv()) {
      if (csv_text.empty()) throw ValidationError("this command has no CSV output; use --format json");
      text = csv_text;
    } else {
      text = j.dump(2) + "\n";
    }
    if (g_.out.empty()) {
      std::cout << text;
    } else {
      std::ofstream f(g_.out);
      if (!f) throw ValidationError("cannot write '" + g_.out + "'");
      f << text;
    }
  }

 private:
  const Globals& g_;
};

void log(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << "[mapkit] " << msg << '\n';
}

Mixture load_mixture(const std::string& path) {
  const json j = read_json(path);
  return mixture_from_json(j.contains("mixture") ? j["mixture"] : j);
}

/// Draws from a JSON array, a MAP analysis document with draws (theta* on
/// the response scale) or whitespace/comma separated text.
std::vector<double> load_draws(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
    if (j.is_array()) return j.get<std::vector<double>>();
    return map_analysis_from_json(j).pooled_theta_star_response();
  }
  std::vector<double> values;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    std::string tok;
    while (fields >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (*end != '\0') {
        if (line_no == 1 && values.empty()) break;  // header
        throw ValidationError(path + ", line " + std::to_string(line_no) + ": not a number: '" + tok + "'");
      }
      values.push_back(v);
    }
  }
  if (values.empty()) throw ValidationError("'" + path + "' contains no draws");
  return values;
}

/// Appends `--key value` for every config entry whose option was not given
/// on the command line, so that flags override the config document.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") path = args[i + 1];
  for (const auto& a : args)
    if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  if (path.empty()) return args;
  // The pipeline reads the config document itself.
  if (std::find(args.begin(), args.end(), "pipeline") != args.end()) return args;
  const json cfg = read_json(path);
  if (!cfg.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given || value.is_null()) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      args.push_back(flag);
      for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      args.push_back(flag);
      args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return args;
}

void print_error(const char* type, const std::string& message) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MAP prior derivation, mixture approximation, ESS and trial design evaluation", "mapkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--config", g.config, "JSON document with command parameters (flags override)");
  app.add_option("--out", g.out, "output file (pipeline: output directory)");
  app.add_option("--format", g.format, "json or csv")->capture_default_str();
  app.add_flag("--verbose", g.verbose, "progress messages on stderr; EM trace in fit reports");
  app.fallthrough();

  std::function<void()> action;

  // map
  auto* map_cmd = app.add_subcommand("map", "MCMC of the random-effects model and the MAP prior");
  FamilyArgs map_fam;
  std::string map_data;
  std::string tau_dist = "half_normal";
  std::vector<double> tau_params{1.0};
  std::vector<double> mu_prior{0.0, 2.0};
  McmcOptions mcmc;
  bool with_draws = false;
  add_family_options(map_cmd, map_fam);
  map_cmd->add_option("--data", map_data, "study CSV")->required();
  map_cmd->add_option("--tau-dist", tau_dist, "half_normal, truncated_normal, uniform, log_normal")->capture_default_str();
  map_cmd->add_option("--tau-params", tau_params, "parameters of the tau prior");
  map_cmd->add_option("--mu-prior", mu_prior, "mean and sd of the normal prior of mu")->expected(2);
  map_cmd->add_option("--chains", mcmc.chains)->capture_default_str();
  map_cmd->add_option("--warmup", mcmc.warmup)->capture_default_str();
  map_cmd->add_option("--iter", mcmc.iter, "kept draws per chain")->capture_default_str();
  map_cmd->add_flag("--draws", with_draws, "include all draws in the report");
  map_cmd->callback([&] {
    action = [&] {
      const auto family = map_fam.resolve();
      const auto data = ingest_csv(map_data, family);
      log(g, "ingested " + std::to_string(data.size()) + " studies, total size " + std::to_string(total_size(data)));
      HyperPriors priors;
      priors.mu_mean = mu_prior.at(0);
      priors.mu_sd = mu_prior.at(1);
      json tp{{"dist", tau_dist}, {"params", tau_params}};
      priors.tau = tp.get<TauPrior>();
      priors.validate();
      if (g.seed) mcmc.seed = *g.seed;
      const auto analysis = gmap(data, priors, mcmc);
      for (const auto& m : analysis.diagnostics.messages) std::cerr << "warning: " << m << '\n';
      json j = map_analysis_to_json(analysis, with_draws);
      j["total_n"] = total_size(data);
      json rows = json::array();
      for (const auto& r : shrinkage_estimates(analysis)) rows.push_back({r.label, r.median, r.lower, r.upper});
      Output(g).emit(j, csv_table({"label", "median", "lower", "upper"}, rows));
    };
  });

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "EM approximation of draws by a conjugate mixture");
  FamilyArgs fit_fam;
  std::string draws_path;
  std::optional<std::size_t> fit_k;
  std::size_t k_max = 4;
  fit_cmd->add_option("--draws", draws_path, "draws: JSON array, MAP report with draws, or text")->required();
  add_family_options(fit_cmd, fit_fam);
  fit_cmd->add_option("--k", fit_k, "fixed number of components");
  fit_cmd->add_option("--k-max", k_max, "largest K tried by AIC selection")->capture_default_str();
  fit_cmd->callback([&] {
    action = [&] {
      const auto family = fit_fam.resolve();
      const auto sample = make_em_sample(load_draws(draws_path), family);
      log(g, "fitting " + std::to_string(sample.values.size()) + " draws");
      EmOptions opts;
      opts.keep_trace = g.verbose;
      const std::uint64_t seed = g.seed.value_or(1);
      const auto fit = fit_k ? em_fit(sample, family, *fit_k, seed, opts) : auto_fit(sample, family, k_max, seed, opts);
      for (const auto& w : fit.warnings) std::cerr << "warning: " << w << '\n';
      Output(g).emit(fit, mixture_csv(fit.mixture));
    };
  });

  // robustify
  auto* rob_cmd = app.add_subcommand("robustify", "add a weakly-informative component");
  std::string rob_mix;
  double rob_weight = 0.2;
  double rob_mean = 0.0;
  double rob_n = 1.0;
  std::string convention{to_string(default_vague_convention)};
  rob_cmd->add_option("--mixture", rob_mix, "mixture JSON")->required();
  rob_cmd->add_option("--weight", rob_weight)->capture_default_str();
  rob_cmd->add_option("--mean", rob_mean, "mean of the vague component")->required();
  rob_cmd->add_option("--n", rob_n, "observations carried by the vague component")->capture_default_str();
  rob_cmd->add_option("--convention", convention, "beta vague component: mean_n, offset_one, total_n_plus_one")
      ->capture_default_str();
  rob_cmd->callback([&] {
    action = [&] {
      const auto conv = vague_convention_from_string(convention);
      const auto robust = robustify(load_mixture(rob_mix), rob_weight, rob_mean, rob_n, conv);
      json j = robust;
      j["convention"] = to_string(conv);
      Output(g).emit(j, mixture_csv(robust));
    };
  });

  // ess
  auto* ess_cmd = app.add_subcommand("ess", "effective sample size of a mixture prior");
  std::string ess_mix;
  std::string ess_method = "all";
  bool ess_strict = false;
  ess_cmd->add_option("--mixture", ess_mix, "mixture JSON")->required();
  ess_cmd->add_option("--method", ess_method, "elir, moment, morita or all")->capture_default_str();
  ess_cmd->add_flag("--strict", ess_strict, "fail when the ELIR integral diverges");
  ess_cmd->callback([&] {
    action = [&] {
      const auto mix = load_mixture(ess_mix);
      std::vector<EssMethod> methods;
      if (ess_method == "all")
        methods = {EssMethod::elir, EssMethod::moment, EssMethod::morita};
      else
        methods = {ess_method_from_string(ess_method)};
      EssOptions opts;
      opts.throw_on_divergence = ess_strict;
      json results = json::array();
      json rows = json::array();
      for (auto m : methods) {
        const auto r = ess(mix, m, opts);
        results.push_back(r);
        rows.push_back({std::string(to_string(r.method)), finite_or_null(r.value), r.diverged, r.quadrature_error});
      }
      Output(g).emit(results, csv_table({"method", "value", "diverged", "quadrature_error"}, rows));
    };
  });

  // update
  auto* upd_cmd = app.add_subcommand("update", "conjugate posterior of a mixture prior");
  std::string upd_mix;
  std::optional<long> upd_r, upd_count;
  std::optional<double> upd_n, upd_mean, upd_exposure;
  upd_cmd->add_option("--mixture", upd_mix, "mixture JSON")->required();
  upd_cmd->add_option("--r", upd_r, "responders (beta)");
  upd_cmd->add_option("--n", upd_n, "trial size (beta) or number of observations (normal)");
  upd_cmd->add_option("--mean", upd_mean, "sample mean (normal)");
  upd_cmd->add_option("--count", upd_count, "event count (gamma)");
  upd_cmd->add_option("--exposure", upd_exposure, "exposure (gamma)");
  upd_cmd->callback([&] {
    action = [&] {
      const auto prior = load_mixture(upd_mix);
      ObservedData data;
      switch (prior.family().tag()) {
        case Family::beta:
          if (!upd_r || !upd_n) throw ValidationError("beta update needs --r and --n");
          if (*upd_n != std::floor(*upd_n)) throw ValidationError("--n must be an integer");
          data = BinomialData{*upd_r, long(*upd_n)};
          break;
        case Family::normal:
          if (!upd_mean || !upd_n) throw ValidationError("normal update needs --mean and --n");
          data = NormalData{*upd_mean, *upd_n};
          break;
        case Family::gamma:
          if (!upd_count || !upd_exposure) throw ValidationError("gamma update needs --count and --exposure");
          data = PoissonData{*upd_count, *upd_exposure};
          break;
      }
      const auto post = posterior_update(prior, data);
      Output(g).emit(json{{"data", data}, {"posterior", post}}, mixture_csv(post));
    };
  });

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "prior predictive distribution of a future trial");
  std::string pred_mix;
  double pred_n = 1.0;
  pred_cmd->add_option("--mixture", pred_mix, "mixture JSON")->required();
  pred_cmd->add_option("--n", pred_n, "trial size, exposure or number of observations")->required();
  pred_cmd->callback([&] {
    action = [&] {
      const auto pred = predictive(load_mixture(pred_mix), pred_n);
      json j = pred;
      j["mean"] = pred.mean();
      json rows = json::array();
      for (const auto& c : pred.components) rows.push_back({c.w, c.a, c.b});
      Output(g).emit(j, csv_table({"w", "a", "b"}, rows));
    };
  });

  // boundary
  auto* bnd_cmd = app.add_subcommand("boundary", "critical decision boundary of a design");
  std::string bnd_design;
  bnd_cmd->add_option("--design", bnd_design, "design JSON")->required();
  bnd_cmd->callback([&] {
    action = [&] {
      const DesignEvaluator eval(design_from_json(read_json(bnd_design)));
      const auto b = eval.boundary();
      json rows = json::array();
      if (b.arity == Arity::one_sample) {
        rows.push_back({nullptr, std::string(to_string(b.one_sample.status)), finite_or_null(b.one_sample.critical)});
      } else {
        for (std::size_t i = 0; i < b.y2.size(); ++i)
          rows.push_back({b.y2[i], std::string(to_string(b.critical_y1[i].status)),
                          finite_or_null(b.critical_y1[i].critical)});
      }
      Output(g).emit(b, csv_table({"y2", "status", "critical_y1"}, rows));
    };
  });

  // oc
  auto* oc_cmd = app.add_subcommand("oc", "operating characteristics over a grid of true parameters");
  std::string oc_design;
  std::vector<double> theta1, theta2;
  oc_cmd->add_option("--design", oc_design, "design JSON")->required();
  oc_cmd->add_option("--theta1,--theta", theta1, "true parameter(s) of arm 1")->required();
  oc_cmd->add_option("--theta2", theta2, "true parameter(s) of arm 2 (same length as --theta1)");
  oc_cmd->callback([&] {
    action = [&] {
      const auto design = design_from_json(read_json(oc_design));
      const DesignEvaluator eval(design);
      const bool two = design.decision.arity == Arity::two_sample;
      if (two && theta2.size() != theta1.size())
        throw ValidationError("--theta2 must have as many values as --theta1");
      json table = json::array();
      json rows = json::array();
      for (std::size_t i = 0; i < theta1.size(); ++i) {
        const double t2 = two ? theta2[i] : 0.0;
        const double p = eval.oc(theta1[i], t2);
        json row{{"theta1", theta1[i]}, {"oc", p}};
        if (two) row["theta2"] = t2;
        table.push_back(row);
        rows.push_back({theta1[i], two ? json(t2) : json(nullptr), p});
      }
      Output(g).emit(json{{"design", design}, {"oc", table}}, csv_table({"theta1", "theta2", "oc"}, rows));
    };
  });

  // pos
  auto* pos_cmd = app.add_subcommand("pos", "probability of success under priors of the true parameters");
  std::string pos_design, pos_prior1, pos_prior2;
  pos_cmd->add_option("--design", pos_design, "design JSON")->required();
  pos_cmd->add_option("--prior1", pos_prior1, "mixture JSON of the arm-1 parameter")->required();
  pos_cmd->add_option("--prior2", pos_prior2, "mixture JSON of the arm-2 parameter (two-sample)");
  pos_cmd->callback([&] {
    action = [&] {
      const auto design = design_from_json(read_json(pos_design));
      const DesignEvaluator eval(design);
      const auto p1 = load_mixture(pos_prior1);
      std::optional<Mixture> p2;
      if (design.decision.arity == Arity::two_sample) {
        if (pos_prior2.empty()) throw ValidationError("two-sample designs need --prior2");
        p2 = load_mixture(pos_prior2);
      }
      const double p = eval.pos(p1, p2 ? &*p2 : nullptr);
      Output(g).emit(json{{"pos", p}}, csv_table({"pos"}, json::array({json::array({p})})));
    };
  });

  // forest
  auto* forest_cmd = app.add_subcommand("forest", "forest plot data of a MAP analysis");
  std::string forest_in, svg_path;
  forest_cmd->add_option("--analysis", forest_in, "MAP report written with --draws")->required();
  forest_cmd->add_option("--svg", svg_path, "also write an SVG drawing");
  forest_cmd->callback([&] {
    action = [&] {
      const auto forest = forest_plot(map_analysis_from_json(read_json(forest_in)));
      if (!svg_path.empty()) {
        std::ofstream f(svg_path);
        if (!f) throw ValidationError("cannot write '" + svg_path + "'");
        f << forest_svg(forest);
      }
      json rows = json::array();
      for (const auto& r : forest.rows)
        rows.push_back({r.label, r.estimate ? json(*r.estimate) : json(nullptr),
                        r.confidence ? json(r.confidence->lower) : json(nullptr),
                        r.confidence ? json(r.confidence->upper) : json(nullptr), r.median, r.credible.lower,
                        r.credible.upper});
      Output(g).emit(forest, csv_table({"label", "estimate", "ci_lower", "ci_upper", "median", "cri_lower",
                                        "cri_upper"},
                                       rows));
    };
  });

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "map -> fit -> robustify -> ess -> design");
  std::string pipe_data;
  pipe_cmd->add_option("--data", pipe_data, "study CSV (overrides the config)");
  pipe_cmd->callback([&] {
    action = [&] {
      if (g.config.empty()) throw ValidationError("pipeline needs --config");
      auto config = run_config_from_json(read_json(g.config));
      // A relative data path in the config is taken from the config's directory.
      if (const std::filesystem::path p(config.data); !config.data.empty() && p.is_relative())
        config.data = (std::filesystem::path(g.config).parent_path() / p).string();
      if (!pipe_data.empty()) config.data = pipe_data;
      if (g.seed) config.mcmc.seed = *g.seed;
      log(g, "running pipeline on " + config.data);
      const json report = run_pipeline(config, g.out);
      if (g.out.empty()) std::cout << report.dump(2) << '\n';
      log(g, "done");
    };
  });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (action) action();
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("validation", e.what());
    return kValidation;
  } catch (const ValidationError& e) {
    print_error("validation", e.what());
    return kValidation;
  } catch (const NumericalError& e) {
    print_error("numerical", e.what());
    return kNumerical;
  } catch (const json::exception& e) {
    print_error("validation", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kInternal;
  }
  return kOk;
}
