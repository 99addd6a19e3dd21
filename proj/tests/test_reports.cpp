#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mapkit/ess.hpp"
#include "mapkit/reports.hpp"
#include "oracles.hpp"

using namespace mapkit;
namespace fs = std::filesystem;

namespace {

const fs::path data_dir = MAPKIT_DATA_DIR;

StudyDataset parse(const std::string& text, const MixtureFamily& fam = MixtureFamily::beta()) {
  std::istringstream in(text);
  return parse_csv(in, fam, "test.csv");
}

double binom_upper_tail(long r, long n, double p) {
  double acc = 0.0;
  for (long k = r; k <= n; ++k) acc += oracle::binom_pmf(k, n, p);
  return acc;
}

double binom_lower_tail(long r, long n, double p) {
  double acc = 0.0;
  for (long k = 0; k <= r; ++k) acc += oracle::binom_pmf(k, n, p);
  return acc;
}

/// Serialising, reading back and serialising again gives the same document.
template <class T, class Read>
void check_round_trip(const T& value, Read read) {
  const json first = value;
  const json second = read(first);
  CHECK(first == second);
}

MapAnalysis small_analysis(std::uint64_t seed = 3) {
  const auto data = ingest_csv(data_dir / "as.csv", MixtureFamily::beta());
  HyperPriors priors;
  priors.mu_sd = 2.0;
  priors.tau = {TauPriorKind::half_normal, 1.0, 0.0};
  McmcOptions opt;
  opt.chains = 2;
  opt.warmup = 300;
  opt.iter = 300;
  opt.seed = seed;
  return gmap(data, priors, opt);
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mapkit_reports_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("ingesting the bundled binomial studies") {
  const auto d = ingest_csv(data_dir / "as.csv", MixtureFamily::beta());
  CHECK(d.size() == 8);
  CHECK(d.labels.front() == "Study 1");
  CHECK(total_size(d) == 513.0);
  const auto& row = std::get<BinomialData>(d.rows[4]);
  CHECK(row.r == 39);
  CHECK(row.n == 139);
}

TEST_CASE("CSV parsing details") {
  SUBCASE("byte order mark, CRLF and quoted labels") {
    const auto d = parse("\xEF\xBB\xBFstudy,r,n\r\n\"Trial, A\",3,10\r\n\"B \"\"x\"\"\",4,12\r\n");
    REQUIRE(d.size() == 2);
    CHECK(d.labels[0] == "Trial, A");
    CHECK(d.labels[1] == "B \"x\"");
  }
  SUBCASE("column order follows the header") {
    const auto d = parse("n,study,r\n10,a,2\n");
    CHECK(std::get<BinomialData>(d.rows[0]).r == 2);
    CHECK(std::get<BinomialData>(d.rows[0]).n == 10);
  }
  SUBCASE("normal and poisson rows") {
    const auto n = parse("study,y,se\na,1.5,0.5\nb,2.0,1.0\n", MixtureFamily::normal(2.0));
    CHECK(n.standard_error(0) == doctest::Approx(0.5));
    CHECK(total_size(n) == doctest::Approx(16.0 + 4.0));
    const auto p = parse("study,count,exposure\na,3,10.5\nb,0,2\n", MixtureFamily::gamma());
    CHECK(total_size(p) == doctest::Approx(12.5));
  }
  SUBCASE("errors name the line") {
    auto message = [](const std::string& text) {
      try {
        parse(text);
      } catch (const ValidationError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    CHECK(message("study,r,n\na,3,10\nb,x,10\n").find("line 3") != std::string::npos);
    CHECK(message("study,r,n\na,12,10\n").find("line 2") != std::string::npos);
    CHECK(message("study,r\na,3\n").find("n") != std::string::npos);
    CHECK_FALSE(message("").empty());
    CHECK_FALSE(message("study,r,n\n").empty());
    CHECK_FALSE(message("study,r,n\na,1,5,7\n").empty());
  }
  CHECK_THROWS_AS(ingest_csv(data_dir / "no_such_file.csv", MixtureFamily::beta()), ValidationError);
}

TEST_CASE("exact binomial interval") {
  const auto ci = clopper_pearson(39, 139);
  CHECK(binom_upper_tail(39, 139, ci.lower) == doctest::Approx(0.025).epsilon(1e-8));
  CHECK(binom_lower_tail(39, 139, ci.upper) == doctest::Approx(0.025).epsilon(1e-8));
  const auto edge0 = clopper_pearson(0, 20);
  CHECK(edge0.lower == 0.0);
  CHECK(binom_lower_tail(0, 20, edge0.upper) == doctest::Approx(0.025).epsilon(1e-8));
  const auto edge1 = clopper_pearson(20, 20);
  CHECK(edge1.upper == 1.0);
}

TEST_CASE("exact poisson and wald intervals") {
  const long k = 7;
  const double e = 3.5;
  const auto ci = poisson_exact(k, e);
  double upper_tail = 1.0, lower_tail = 0.0;
  for (long y = 0; y < k; ++y) upper_tail -= oracle::poisson_pmf(y, ci.lower * e);
  for (long y = 0; y <= k; ++y) lower_tail += oracle::poisson_pmf(y, ci.upper * e);
  CHECK(upper_tail == doctest::Approx(0.025).epsilon(1e-8));
  CHECK(lower_tail == doctest::Approx(0.025).epsilon(1e-8));
  CHECK(poisson_exact(0, 2.0).lower == 0.0);
  const auto w = wald(1.0, 0.5, 0.95);
  CHECK(w.lower == doctest::Approx(1.0 - 1.959963984540054 * 0.5));
  CHECK(w.upper == doctest::Approx(1.0 + 1.959963984540054 * 0.5));
}

TEST_CASE("forest plot rows") {
  const auto analysis = small_analysis();
  const auto f = forest_plot(analysis);
  REQUIRE(f.rows.size() == 10);
  CHECK(f.rows[8].label == "typical");
  CHECK(f.rows[9].label == "MAP");
  CHECK_FALSE(f.rows[9].estimate);
  REQUIRE(f.rows[4].estimate);
  CHECK(*f.rows[4].estimate == doctest::Approx(39.0 / 139.0));
  const auto cp = clopper_pearson(39, 139);
  CHECK(f.rows[4].confidence->lower == doctest::Approx(cp.lower));
  for (const auto& r : f.rows) {
    CHECK(r.credible.lower <= r.median);
    CHECK(r.median <= r.credible.upper);
  }
  // The predictive interval of a new study is wider than that of the mean.
  CHECK(f.rows[9].credible.upper - f.rows[9].credible.lower > f.rows[8].credible.upper - f.rows[8].credible.lower);
  const auto svg = forest_svg(f);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("Study 5") != std::string::npos);

  StudyDataset one;
  one.labels = {"only"};
  one.rows = {BinomialData{5, 20}};
  HyperPriors priors;
  McmcOptions opt;
  opt.chains = 2;
  opt.warmup = 200;
  opt.iter = 200;
  CHECK(forest_plot(gmap(one, priors, opt)).rows.size() == 3);
}

TEST_CASE("JSON round trips") {
  const Mixture beta(MixtureFamily::beta(), {{0.7, 3.0, 9.0}, {0.3, 1.0, 1.0}});
  const Mixture normal(MixtureFamily::normal(2.5), {{1.0, 0.1, 0.4}});
  const Mixture expo(MixtureFamily::gamma(GammaLikelihood::exponential), {{1.0, 4.0, 2.0}});
  for (const auto* m : {&beta, &normal, &expo}) check_round_trip(*m, [](const json& j) { return mixture_from_json(j); });

  for (const ObservedData& d : {ObservedData{BinomialData{3, 10}}, ObservedData{NormalData{0.4, 12.0}},
                                ObservedData{PoissonData{4, 2.5}}})
    check_round_trip(d, [](const json& j) { return observed_data_from_json(j); });

  check_round_trip(predictive(beta, 12.0), [](const json& j) { return j.get<PredictiveMixture>(); });
  for (auto m : {EssMethod::elir, EssMethod::moment, EssMethod::morita})
    check_round_trip(ess(beta, m), [](const json& j) { return j.get<EssResult>(); });
  const Mixture divergent(MixtureFamily::beta(), {{1.0, 0.5, 2.0}});
  const auto div = ess(divergent);
  const auto back = json(div).get<EssResult>();
  CHECK(back.diverged);
  CHECK(std::isinf(back.value));

  HyperPriors h;
  h.mu_mean = -1.0;
  h.mu_sd = 1.5;
  h.tau = {TauPriorKind::log_normal, -1.0, 0.7};
  check_round_trip(h, [](const json& j) { return j.get<HyperPriors>(); });
  McmcOptions o;
  o.chains = 3;
  o.seed = 12345678901ULL;
  check_round_trip(o, [](const json& j) { return j.get<McmcOptions>(); });

  const double p[] = {0.95, 0.5}, q[] = {0.0, 0.1};
  const auto decision = decision2S(p, q, true, Link::logit);
  check_round_trip(decision, [](const json& j) { return j.get<DecisionFunction>(); });
  const Design design{decision, beta, 20, beta, 10};
  check_round_trip(design, [](const json& j) { return design_from_json(j); });
  check_round_trip(decision2S_boundary(design), [](const json& j) { return j.get<Boundary>(); });
  const double p1[] = {0.9}, q1[] = {0.3};
  check_round_trip(decision1S_boundary(Design{decision1S(p1, q1, false), beta, 15, std::nullopt, 1.0}),
                   [](const json& j) { return j.get<CriticalValue>(); });

  const auto sample = make_em_sample(beta.sample(800, 5), beta.family());
  check_round_trip(em_fit(sample, beta.family(), 2, 1), [](const json& j) { return em_fit_result_from_json(j); });

  const auto analysis = small_analysis();
  check_round_trip(analysis.data, [](const json& j) { return study_dataset_from_json(j); });
  check_round_trip(forest_plot(analysis), [](const json& j) { return j.get<ForestPlotData>(); });
  const json full = map_analysis_to_json(analysis, true);
  CHECK(full == map_analysis_to_json(map_analysis_from_json(full), true));
  // A summary-only document cannot be turned back into draws.
  CHECK_THROWS_AS(map_analysis_from_json(map_analysis_to_json(analysis, false)), ValidationError);
  const auto restored = map_analysis_from_json(map_analysis_to_json(analysis, true));
  CHECK(restored.pooled_theta_star() == analysis.pooled_theta_star());

  const auto config = run_config_from_json(read_json(data_dir / "as_pipeline.json"));
  check_round_trip(config, [](const json& j) { return run_config_from_json(j); });
}

TEST_CASE("density overlay") {
  const Mixture m(MixtureFamily::beta(), {{0.6, 4.0, 12.0}, {0.4, 10.0, 5.0}});
  const auto draws = m.sample(20000, 7);
  const auto ov = density_overlay(draws, m, 40, 201);
  REQUIRE(ov.bin_edges.size() == 41);
  REQUIRE(ov.bin_density.size() == 40);
  double mass = 0.0;
  for (std::size_t i = 0; i < 40; ++i) mass += ov.bin_density[i] * (ov.bin_edges[i + 1] - ov.bin_edges[i]);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(ov.grid.size() == 201);
  double curve = 0.0;
  for (std::size_t i = 1; i < ov.grid.size(); ++i)
    curve += 0.5 * (ov.mixture_density[i] + ov.mixture_density[i - 1]) * (ov.grid[i] - ov.grid[i - 1]);
  CHECK(curve == doctest::Approx(m.cdf(ov.grid.back()) - m.cdf(ov.grid.front())).epsilon(1e-3));
  CHECK_THROWS_AS(density_overlay(std::vector<double>{}, m), ValidationError);
}

TEST_CASE("run configuration checks") {
  auto j = read_json(data_dir / "as_pipeline.json");
  CHECK_NOTHROW(run_config_from_json(j).validate());
  auto bad = j;
  bad["robust"]["weight"] = 1.5;
  CHECK_THROWS_AS(run_config_from_json(bad).validate(), ValidationError);
  bad = j;
  bad.erase("data");
  CHECK_THROWS_AS(run_config_from_json(bad).validate(), ValidationError);
  bad = j;
  bad["family"] = "weibull";
  CHECK_THROWS_AS(run_config_from_json(bad).validate(), ValidationError);
}

TEST_CASE("pipeline is deterministic and reports stage errors") {
  auto config = run_config_from_json(read_json(data_dir / "as_pipeline.json"));
  config.data = (data_dir / "as.csv").string();
  config.mcmc.chains = 2;
  config.mcmc.warmup = 300;
  config.mcmc.iter = 500;
  config.k_max = 2;
  const auto a = fresh_dir("a"), b = fresh_dir("b");
  const json ra = run_pipeline(config, a);
  const json rb = run_pipeline(config, b);
  for (const char* stage : {"ingest", "map", "fit", "robustify", "ess", "design"}) {
    CAPTURE(stage);
    REQUIRE(fs::exists(a / (std::string(stage) + ".json")));
    CHECK(slurp(a / (std::string(stage) + ".json")) == slurp(b / (std::string(stage) + ".json")));
  }
  json ca = read_json(a / "report.json"), cb = read_json(b / "report.json");
  CHECK(ca.contains("timestamp"));
  ca.erase("timestamp");
  cb.erase("timestamp");
  CHECK(ca == cb);
  CHECK(ra["ingest"]["total_n"] == 513.0);

  config.data = (data_dir / "missing.csv").string();
  try {
    run_pipeline(config, {});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("stage 'ingest'") != std::string::npos);
  }
}
