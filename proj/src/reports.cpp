#include "mapkit/reports.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mapkit/ess.hpp"

namespace mapkit {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c != '"') {
        cur += c;
      } else if (i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else {
        quoted = false;
      }
    } else if (c == '"') {
      if (trim(cur).empty()) cur.clear();
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else if (!(was_quoted && std::isspace(static_cast<unsigned char>(c)))) {
      cur += c;
    }
  }
  fields.push_back(was_quoted ? cur : trim(cur));
  return fields;
}

std::string at_line(const std::string& source, std::size_t line) {
  return source + ", line " + std::to_string(line) + ": ";
}

double parse_number(const std::string& text, const std::string& where, const std::string& column) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || !std::isfinite(value))
    throw ValidationError(where + "column '" + column + "' is not a number: '" + text + "'");
  return value;
}

long parse_count(const std::string& text, const std::string& where, const std::string& column) {
  const double v = parse_number(text, where, column);
  if (v != std::floor(v)) throw ValidationError(where + "column '" + column + "' must be an integer");
  if (v < 0) throw ValidationError(where + "column '" + column + "' must not be negative");
  return static_cast<long>(v);
}

double z_quantile(double level) { return std::sqrt(2.0) * boost::math::erf_inv(level); }

template <class F>
auto in_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("stage '") + stage + "': " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("stage '") + stage + "': " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Ingestion

StudyDataset parse_csv(std::istream& in, const MixtureFamily& family, const std::string& source) {
  std::vector<std::string> columns;
  switch (family.tag()) {
    case Family::beta: columns = {"r", "n"}; break;
    case Family::normal: columns = {"y", "se"}; break;
    case Family::gamma: columns = {"count", "exposure"}; break;
  }
  StudyDataset data;
  data.family = family;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> index;
  std::size_t study_col = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    const std::string where = at_line(source, line_no);
    if (index.empty()) {
      auto find = [&](const std::string& name) {
        const auto it = std::find(fields.begin(), fields.end(), name);
        if (it == fields.end())
          throw ValidationError(where + "header must contain the column '" + name + "'");
        return std::size_t(it - fields.begin());
      };
      study_col = find("study");
      for (const auto& c : columns) index.push_back(find(c));
      width = fields.size();
      continue;
    }
    if (fields.size() != width)
      throw ValidationError(where + "expected " + std::to_string(width) + " fields, found " +
                            std::to_string(fields.size()));
    const std::string& label = fields[study_col];
    if (label.empty()) throw ValidationError(where + "empty study label");
    switch (family.tag()) {
      case Family::beta: {
        const long r = parse_count(fields[index[0]], where, "r");
        const long n = parse_count(fields[index[1]], where, "n");
        if (n == 0) throw ValidationError(where + "n must be positive");
        if (r > n) throw ValidationError(where + "r = " + std::to_string(r) + " exceeds n = " + std::to_string(n));
        data.rows.push_back(BinomialData{r, n});
        break;
      }
      case Family::normal: {
        const double y = parse_number(fields[index[0]], where, "y");
        const double se = parse_number(fields[index[1]], where, "se");
        if (se <= 0) throw ValidationError(where + "se must be positive");
        data.rows.push_back(NormalData::from_se(y, se, family.sampling_sd()));
        break;
      }
      case Family::gamma: {
        const long count = parse_count(fields[index[0]], where, "count");
        const double exposure = parse_number(fields[index[1]], where, "exposure");
        if (exposure <= 0) throw ValidationError(where + "exposure must be positive");
        data.rows.push_back(PoissonData{count, exposure});
        break;
      }
    }
    data.labels.push_back(label);
  }
  if (index.empty()) throw ValidationError(source + ": empty file");
  if (data.rows.empty()) throw ValidationError(source + ": no data rows");
  data.validate();
  return data;
}

StudyDataset ingest_csv(const std::filesystem::path& path, const MixtureFamily& family) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return parse_csv(in, family, path.string());
}

double total_size(const StudyDataset& data) {
  double total = 0.0;
  for (const auto& row : data.rows) {
    std::visit(
        [&total](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, PoissonData>)
            total += v.exposure;
          else
            total += double(v.n);
        },
        row);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Intervals and forest plot

Interval clopper_pearson(long r, long n, double level) {
  if (n <= 0 || r < 0 || r > n) throw ValidationError("Clopper-Pearson interval needs 0 <= r <= n, n > 0");
  const double alpha = 1.0 - level;
  const double lo = r == 0 ? 0.0 : boost::math::ibeta_inv(double(r), double(n - r + 1), alpha / 2);
  const double hi = r == n ? 1.0 : boost::math::ibeta_inv(double(r + 1), double(n - r), 1.0 - alpha / 2);
  return {lo, hi};
}

Interval poisson_exact(long count, double exposure, double level) {
  if (count < 0 || !(exposure > 0)) throw ValidationError("poisson interval needs count >= 0 and exposure > 0");
  const double alpha = 1.0 - level;
  const double lo = count == 0 ? 0.0 : boost::math::gamma_p_inv(double(count), alpha / 2);
  const double hi = boost::math::gamma_p_inv(double(count + 1), 1.0 - alpha / 2);
  return {lo / exposure, hi / exposure};
}

Interval wald(double estimate, double se, double level) {
  const double z = z_quantile(level);
  return {estimate - z * se, estimate + z * se};
}

ForestPlotData forest_plot(const MapAnalysis& analysis) {
  if (analysis.chains.empty()) throw ValidationError("forest plot needs a completed MAP analysis");
  const auto shrink = shrinkage_estimates(analysis);
  const auto& data = analysis.data;
  ForestPlotData out;
  for (std::size_t j = 0; j < shrink.size(); ++j) {
    ForestRow row;
    row.label = shrink[j].label;
    row.median = shrink[j].median;
    row.credible = {shrink[j].lower, shrink[j].upper};
    if (j < data.size()) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, BinomialData>) {
              row.estimate = double(v.r) / double(v.n);
              row.confidence = clopper_pearson(v.r, v.n);
            } else if constexpr (std::is_same_v<T, NormalData>) {
              row.estimate = v.mean;
              row.confidence = wald(v.mean, data.standard_error(j));
            } else {
              row.estimate = double(v.count) / v.exposure;
              row.confidence = poisson_exact(v.count, v.exposure);
            }
          },
          data.rows[j]);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string forest_svg(const ForestPlotData& data) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : data.rows) {
    lo = std::min(lo, r.credible.lower);
    hi = std::max(hi, r.credible.upper);
    if (r.confidence) {
      lo = std::min(lo, r.confidence->lower);
      hi = std::max(hi, r.confidence->upper);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double left = 120, plot_w = 480, top = 20, row_h = 28;
  const double height = top * 2 + row_h * double(data.rows.size()) + 30;
  const auto x = [&](double v) { return left + plot_w * (v - lo) / (hi - lo); };

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + plot_w + 20 << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    const auto& r = data.rows[i];
    const double y = top + row_h * (double(i) + 0.5);
    s << "  <text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << r.label << "</text>\n";
    if (r.confidence) {
      s << "  <line x1=\"" << x(r.confidence->lower) << "\" y1=\"" << y - 5 << "\" x2=\"" << x(r.confidence->upper)
        << "\" y2=\"" << y - 5 << "\" stroke=\"#999999\"/>\n";
      s << "  <circle cx=\"" << x(*r.estimate) << "\" cy=\"" << y - 5 << "\" r=\"3\" fill=\"#bbbbbb\"/>\n";
    }
    s << "  <line x1=\"" << x(r.credible.lower) << "\" y1=\"" << y + 5 << "\" x2=\"" << x(r.credible.upper)
      << "\" y2=\"" << y + 5 << "\" stroke=\"#000000\"/>\n";
    s << "  <circle cx=\"" << x(r.median) << "\" cy=\"" << y + 5 << "\" r=\"3\" fill=\"#000000\"/>\n";
  }
  const double axis_y = top + row_h * double(data.rows.size()) + 5;
  s << "  <line x1=\"" << left << "\" y1=\"" << axis_y << "\" x2=\"" << left + plot_w << "\" y2=\"" << axis_y
    << "\" stroke=\"#000000\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    s << "  <text x=\"" << x(v) << "\" y=\"" << axis_y + 16 << "\" text-anchor=\"middle\">" << std::setprecision(3)
      << v << std::setprecision(2) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void to_json(json& j, const ForestPlotData& f) {
  j = json::array();
  for (const auto& r : f.rows) {
    json row{{"label", r.label},
             {"estimate", r.estimate ? json(*r.estimate) : json(nullptr)},
             {"ci", r.confidence ? json{r.confidence->lower, r.confidence->upper} : json(nullptr)},
             {"median", r.median},
             {"cri", {r.credible.lower, r.credible.upper}}};
    j.push_back(row);
  }
}

void from_json(const json& j, ForestPlotData& f) {
  f.rows.clear();
  for (const auto& row : j) {
    ForestRow r;
    r.label = row.at("label").get<std::string>();
    if (!row.at("estimate").is_null()) r.estimate = row["estimate"].get<double>();
    if (!row.at("ci").is_null()) r.confidence = Interval{row["ci"][0].get<double>(), row["ci"][1].get<double>()};
    r.median = row.at("median").get<double>();
    r.credible = {row.at("cri")[0].get<double>(), row["cri"][1].get<double>()};
    f.rows.push_back(std::move(r));
  }
}

// ---------------------------------------------------------------------------
// Density overlay

DensityOverlay density_overlay(std::span<const double> draws, const Mixture& mix, std::size_t bins,
                               std::size_t points) {
  if (draws.empty()) throw ValidationError("density overlay needs draws");
  if (bins == 0 || points < 2) throw ValidationError("density overlay needs bins >= 1 and points >= 2");
  const auto [mn, mx] = std::minmax_element(draws.begin(), draws.end());
  double lo = *mn, hi = *mx;
  if (!(hi > lo)) hi = lo + 1e-6;
  DensityOverlay out;
  const double width = (hi - lo) / double(bins);
  for (std::size_t b = 0; b <= bins; ++b) out.bin_edges.push_back(lo + width * double(b));
  out.bin_density.assign(bins, 0.0);
  for (double v : draws) {
    auto b = std::size_t((v - lo) / width);
    out.bin_density[std::min(b, bins - 1)] += 1.0;
  }
  for (double& d : out.bin_density) d /= double(draws.size()) * width;
  for (std::size_t i = 0; i < points; ++i) {
    const double g = lo + (hi - lo) * double(i) / double(points - 1);
    out.grid.push_back(g);
    out.mixture_density.push_back(mix.family().in_open_support(g) ? mix.density(g) : 0.0);
  }
  return out;
}

void to_json(json& j, const DensityOverlay& d) {
  j = json{{"bin_edges", d.bin_edges},
           {"bin_density", d.bin_density},
           {"grid", d.grid},
           {"mixture_density", d.mixture_density}};
}

// ---------------------------------------------------------------------------
// Run configuration

MixtureFamily RunConfig::mixture_family() const {
  const Family tag = family_from_string(family);
  switch (tag) {
    case Family::beta: return MixtureFamily::beta();
    case Family::gamma: return MixtureFamily::gamma(likelihood_from_string(likelihood));
    case Family::normal:
      if (!sigma) throw ValidationError("normal endpoints need the sampling standard deviation 'sigma'");
      return MixtureFamily::normal(*sigma);
  }
  return MixtureFamily::beta();
}

void RunConfig::validate() const {
  if (data.empty()) throw ValidationError("config: 'data' (study CSV path) is required");
  const auto fam = mixture_family();
  if (fam.tag() == Family::gamma && fam.likelihood() == GammaLikelihood::exponential)
    throw ValidationError("config: study data of a gamma family must be poisson counts");
  priors.validate();
  if (mcmc.chains == 0 || mcmc.iter < 4) throw ValidationError("config: need at least one chain and 4 draws");
  if (k_max == 0) throw ValidationError("config: k_max must be positive");
  if (!(robust_weight > 0 && robust_weight < 1)) throw ValidationError("config: robust weight must be in (0, 1)");
  if (!(robust_n > 0)) throw ValidationError("config: robust n must be positive");
  if (robust_mean && !fam.in_open_support(*robust_mean))
    throw ValidationError("config: robust mean outside the support");
  if (decision || treatment_prior) {
    if (!has_design()) throw ValidationError("config: a design needs both 'decision' and 'treatment_prior'");
    if (decision->arity != Arity::two_sample) throw ValidationError("config: the design decision must be two-sample");
    if (!(treatment_prior->family() == fam)) throw ValidationError("config: treatment prior family differs from the data");
    for (double t : oc_grid)
      if (!fam.in_support(t)) throw ValidationError("config: oc grid value outside the support");
  }
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  RunConfig c;
  try {
    c.data = j.value("data", c.data);
    c.family = j.value("family", c.family);
    if (j.contains("sigma") && !j["sigma"].is_null()) c.sigma = j["sigma"].get<double>();
    c.likelihood = j.value("likelihood", c.likelihood);
    if (j.contains("priors")) c.priors = j["priors"].get<HyperPriors>();
    if (j.contains("mcmc")) c.mcmc = j["mcmc"].get<McmcOptions>();
    c.k_max = j.value("k_max", c.k_max);
    if (j.contains("robust")) {
      const json& r = j["robust"];
      c.robust_weight = r.value("weight", c.robust_weight);
      if (r.contains("mean") && !r["mean"].is_null()) c.robust_mean = r["mean"].get<double>();
      c.robust_n = r.value("n", c.robust_n);
      if (r.contains("convention")) c.convention = vague_convention_from_string(r["convention"].get<std::string>());
    }
    if (j.contains("design") && !j["design"].is_null()) {
      const json& d = j["design"];
      c.decision = d.at("decision").get<DecisionFunction>();
      c.treatment_prior = mixture_from_json(d.at("treatment_prior"));
      c.n1 = d.at("n1").get<double>();
      c.n2 = d.at("n2").get<double>();
      c.oc_grid = d.value("oc_grid", c.oc_grid);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"data", c.data},
           {"family", c.family},
           {"sigma", c.sigma ? json(*c.sigma) : json(nullptr)},
           {"likelihood", c.likelihood},
           {"priors", c.priors},
           {"mcmc", c.mcmc},
           {"k_max", c.k_max},
           {"robust",
            {{"weight", c.robust_weight},
             {"mean", c.robust_mean ? json(*c.robust_mean) : json(nullptr)},
             {"n", c.robust_n},
             {"convention", to_string(c.convention)}}}};
  if (c.has_design()) {
    j["design"] = {{"decision", *c.decision},
                   {"treatment_prior", *c.treatment_prior},
                   {"n1", c.n1},
                   {"n2", c.n2},
                   {"oc_grid", c.oc_grid}};
  } else {
    j["design"] = nullptr;
  }
}

// ---------------------------------------------------------------------------
// Pipeline

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

json run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const MixtureFamily family = config.mixture_family();
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  json report;
  report["config"] = config;
  const auto emit = [&](const char* stage, const json& body) {
    report[stage] = body;
    if (!out_dir.empty()) write_json(out_dir / (std::string(stage) + ".json"), body);
  };

  const StudyDataset data = in_stage("ingest", [&] { return ingest_csv(config.data, family); });
  emit("ingest", {{"studies", data.size()}, {"total_n", total_size(data)}});

  const MapAnalysis analysis = in_stage("map", [&] { return gmap(data, config.priors, config.mcmc); });
  json map_json = map_analysis_to_json(analysis, false);
  map_json["forest"] = forest_plot(analysis);
  emit("map", map_json);

  const auto draws = analysis.pooled_theta_star_response();
  const EmFitResult fit = in_stage("fit", [&] {
    EmOptions opts;
    opts.keep_trace = false;
    return auto_fit(make_em_sample(draws, family), family, config.k_max, config.mcmc.seed, opts);
  });
  json fit_json = fit;
  fit_json["overlay"] = density_overlay(draws, fit.mixture);
  emit("fit", fit_json);

  const Mixture robust = in_stage("robustify", [&] {
    const double mean = config.robust_mean.value_or(fit.mixture.mean());
    return robustify(fit.mixture, config.robust_weight, mean, config.robust_n, config.convention);
  });
  emit("robustify", {{"mixture", robust},
                     {"weight", config.robust_weight},
                     {"mean", config.robust_mean.value_or(fit.mixture.mean())},
                     {"n", config.robust_n},
                     {"convention", to_string(config.convention)}});

  json ess_json = in_stage("ess", [&] {
    json out;
    for (const auto& [name, mix] : {std::pair<const char*, const Mixture*>{"map", &fit.mixture}, {"robust", &robust}}) {
      json methods = json::array();
      for (auto m : {EssMethod::elir, EssMethod::moment, EssMethod::morita}) methods.push_back(ess(*mix, m));
      out[name] = methods;
    }
    return out;
  });
  emit("ess", ess_json);

  if (config.has_design()) {
    json design_json = in_stage("design", [&] {
      json out = json::array();
      for (const auto& [name, prior2] : {std::pair<const char*, const Mixture*>{"map", &fit.mixture}, {"robust", &robust}}) {
        Design design{*config.decision, *config.treatment_prior, config.n1, *prior2, config.n2};
        design.validate();
        const DesignEvaluator eval(design);
        json table = json::array();
        for (double t : config.oc_grid) table.push_back({{"theta1", t}, {"theta2", t}, {"oc", eval.oc(t, t)}});
        out.push_back({{"prior", name}, {"design", design}, {"oc", table}});
      }
      return out;
    });
    emit("design", design_json);
  }

  if (!out_dir.empty()) {
    json combined = report;
    combined["timestamp"] = [] {
      const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      std::ostringstream s;
      s << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
      return s.str();
    }();
    write_json(out_dir / "report.json", combined);
  }
  return report;
}

}  // namespace mapkit
