#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "mapkit/serialize.hpp"

namespace fs = std::filesystem;
using mapkit::json;

namespace {

const fs::path data_dir = MAPKIT_DATA_DIR;
const fs::path scratch = fs::temp_directory_path() / "mapkit_cli_test";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Run cli(const std::string& args) {
  fs::create_directories(scratch);
  const auto err_path = scratch / "stderr.txt";
  const std::string cmd = quote(MAPKIT_CLI) + " " + args + " 2>" + quote(err_path.string());
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::string data(const std::string& name) { return quote((data_dir / name).string()); }

std::string write_file(const std::string& name, const std::string& text) {
  fs::create_directories(scratch);
  const auto p = scratch / name;
  std::ofstream(p) << text;
  return quote(p.string());
}

std::string error_type(const Run& r) {
  const auto j = json::parse(r.err, nullptr, false);
  if (j.is_discarded() || !j.contains("error")) return "";
  return j["error"].value("type", "");
}

}  // namespace

TEST_CASE("operating characteristics of the bundled design") {
  const auto r = cli("oc --design " + data("as_design.json") + " --theta1 0.25 0.5 0.75 --theta2 0.25 0.5 0.75");
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  REQUIRE(j["oc"].size() == 3);
  CHECK(j["oc"][0]["oc"].get<double>() == doctest::Approx(0.0195).epsilon(0.05));
  CHECK(j["oc"][1]["oc"].get<double>() == doctest::Approx(0.3203).epsilon(0.005));
  CHECK(j["oc"][2]["oc"].get<double>() == doctest::Approx(0.5979).epsilon(0.005));

  const auto csv = cli("--format csv oc --design " + data("as_design.json") + " --theta1 0.5 --theta2 0.5");
  REQUIRE(csv.code == 0);
  CHECK(csv.out.find("theta1") != std::string::npos);
}

TEST_CASE("robustify then ESS") {
  const auto rob = cli("robustify --mixture " + data("as_map_mixture.json") + " --weight 0.2 --mean 0.5");
  REQUIRE(rob.code == 0);
  const auto mix = json::parse(rob.out);
  REQUIRE(mix["components"].size() == 5);
  CHECK(mix["components"][4][0].get<double>() == doctest::Approx(0.2));
  CHECK(mix["components"][4][1].get<double>() == doctest::Approx(1.0));
  CHECK(mix["components"][4][2].get<double>() == doctest::Approx(1.0));
  const auto path = write_file("robust.json", rob.out);
  const auto e = cli("ess --mixture " + path);
  REQUIRE(e.code == 0);
  const auto j = json::parse(e.out);
  REQUIRE(j.size() == 3);
  for (const auto& row : j) CHECK(row["value"].get<double>() > 0.0);

  const auto base = cli("ess --mixture " + data("as_map_mixture.json") + " --method elir");
  REQUIRE(base.code == 0);
  // Robustification lowers the effective sample size.
  CHECK(json::parse(base.out)[0]["value"].get<double>() > j[0]["value"].get<double>());
}

TEST_CASE("update and predict") {
  const auto prior = write_file("b.json", R"({"family":"beta","components":[[1,2,3]]})");
  const auto u = cli("update --mixture " + prior + " --r 4 --n 10");
  REQUIRE(u.code == 0);
  const auto j = json::parse(u.out);
  const auto& comps = j.contains("posterior") ? j["posterior"]["components"] : j["components"];
  CHECK(comps[0][1].get<double>() == doctest::Approx(6.0));
  CHECK(comps[0][2].get<double>() == doctest::Approx(9.0));
  CHECK(cli("predict --mixture " + prior + " --n 10").code == 0);
}

TEST_CASE("MAP runs are reproducible for a fixed seed") {
  const std::string args = "--seed 11 map --data " + data("as.csv") +
                           " --family beta --tau-dist half_normal --tau-params 1 --chains 2 --warmup 200 --iter 300";
  const auto a = cli(args), b = cli(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto c = cli("--seed 12 map --data " + data("as.csv") +
                     " --family beta --tau-dist half_normal --tau-params 1 --chains 2 --warmup 200 --iter 300");
  REQUIRE(c.code == 0);
  CHECK(a.out != c.out);
}

TEST_CASE("configuration files and overriding flags") {
  const auto cfg = write_file("oc.json", R"({"theta1": [0.5], "theta2": [0.5]})");
  const auto r = cli("--config " + cfg + " oc --design " + data("as_design.json"));
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["oc"][0]["theta1"].get<double>() == 0.5);
  const auto o = cli("--config " + cfg + " oc --design " + data("as_design.json") + " --theta1 0.75 --theta2 0.75");
  REQUIRE(o.code == 0);
  CHECK(json::parse(o.out)["oc"][0]["theta1"].get<double>() == 0.75);
}

TEST_CASE("validation errors exit with code 2") {
  const auto missing = cli("ess --mixture /no/such/file.json");
  CHECK(missing.code == 2);
  CHECK(error_type(missing) == "validation");
  CHECK(missing.out.empty());

  const auto theta = cli("oc --design " + data("as_design.json") + " --theta1 1.5 --theta2 0.2");
  CHECK(theta.code == 2);
  CHECK(error_type(theta) == "validation");

  const auto parse = cli("oc --design " + data("as_design.json") + " --theta1 abc --theta2 0.2");
  CHECK(parse.code == 2);
  CHECK(error_type(parse) == "validation");

  const auto bad_json = cli("ess --mixture " + write_file("broken.json", "{\"family\": "));
  CHECK(bad_json.code == 2);

  const auto no_cmd = cli("");
  CHECK(no_cmd.code == 2);

  const auto bad_weight = cli("robustify --mixture " + data("as_map_mixture.json") + " --weight 1.5 --mean 0.5");
  CHECK(bad_weight.code == 2);
}

TEST_CASE("numerical failures exit with code 3") {
  const auto prior = write_file("vague.json", R"({"family":"beta","components":[[1,0.5,1]]})");
  const auto strict = cli("ess --mixture " + prior + " --method elir --strict");
  CHECK(strict.code == 3);
  CHECK(error_type(strict) == "numerical");
  // Without --strict the divergence is reported in the result.
  const auto lenient = cli("ess --mixture " + prior + " --method elir");
  REQUIRE(lenient.code == 0);
  CHECK(json::parse(lenient.out)[0]["diverged"].get<bool>());
}

TEST_CASE("pipeline writes every stage") {
  const auto out = scratch / "pipeline";
  fs::remove_all(out);
  fs::create_directories(out);
  const auto r = cli("--seed 5 --out " + quote(out.string()) + " pipeline --config " + data("as_pipeline.json"));
  REQUIRE(r.code == 0);
  for (const char* stage : {"ingest", "map", "fit", "robustify", "ess", "design", "report"})
    CHECK(fs::exists(out / (std::string(stage) + ".json")));
  const auto report = json::parse(slurp(out / "report.json"));
  CHECK(report["ingest"]["total_n"].get<double>() == 513.0);
  CHECK(report["config"]["mcmc"]["seed"].get<std::uint64_t>() == 5);
  CHECK(cli("pipeline").code == 2);
}

TEST_CASE("help") { CHECK(cli("--help").code == 0); }
