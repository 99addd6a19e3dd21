#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mapkit/mixture.hpp"
#include "oracles.hpp"

using namespace mapkit;

namespace {

Mixture as_mixture() {
  return Mixture(MixtureFamily::beta(), {{0.4652656, 31.0317022, 96.5540272},
                                         {0.2038402, 21.3507421, 42.9105627},
                                         {0.1955961, 10.2829720, 45.1537087},
                                         {0.1352982, 2.2980848, 5.0607874}});
}

}  // namespace

TEST_CASE("densities match the textbook formulas") {
  const Mixture b(MixtureFamily::beta(), {{0.3, 2.5, 7.0}, {0.7, 11.0, 4.0}});
  const Mixture n(MixtureFamily::normal(2.0), {{0.5, -1.0, 0.7}, {0.5, 2.0, 1.5}});
  const Mixture g(MixtureFamily::gamma(), {{0.4, 3.0, 2.0}, {0.6, 0.8, 0.5}});
  for (double x : {0.01, 0.2, 0.5, 0.77, 0.99}) {
    const double want = 0.3 * oracle::beta_pdf(x, 2.5, 7.0) + 0.7 * oracle::beta_pdf(x, 11.0, 4.0);
    CHECK(b.density(x) == doctest::Approx(want).epsilon(1e-12));
  }
  for (double x : {-3.0, -1.0, 0.0, 1.3, 4.0}) {
    const double want = 0.5 * oracle::normal_pdf(x, -1.0, 0.7) + 0.5 * oracle::normal_pdf(x, 2.0, 1.5);
    CHECK(n.density(x) == doctest::Approx(want).epsilon(1e-12));
  }
  for (double x : {0.05, 0.5, 1.0, 3.0, 10.0}) {
    const double want = 0.4 * oracle::gamma_pdf(x, 3.0, 2.0) + 0.6 * oracle::gamma_pdf(x, 0.8, 0.5);
    CHECK(g.density(x) == doctest::Approx(want).epsilon(1e-12));
    CHECK(g.log_density(x) == doctest::Approx(std::log(want)).epsilon(1e-12));
  }
  CHECK(b.density(1.5) == 0.0);
  CHECK(g.density(-1.0) == 0.0);
}

TEST_CASE("cdf agrees with integrated density and quantile inverts it") {
  const Mixture b(MixtureFamily::beta(), {{0.3, 2.5, 7.0}, {0.7, 11.0, 4.0}});
  for (double x : {0.1, 0.35, 0.6, 0.9}) {
    const double want = oracle::simpson([&](double t) { return b.density(t); }, 0.0, x);
    CHECK(b.cdf(x) == doctest::Approx(want).epsilon(1e-9));
    CHECK(b.cdf(x) + b.ccdf(x) == doctest::Approx(1.0).epsilon(1e-14));
  }
  const Mixture g(MixtureFamily::gamma(), {{0.4, 3.0, 2.0}, {0.6, 2.0, 0.5}});
  const Mixture n(MixtureFamily::normal(1.0), {{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}});
  for (double p : {1e-6, 0.025, 0.3, 0.5, 0.9, 0.975, 1 - 1e-6}) {
    CHECK(b.cdf(b.quantile(p)) == doctest::Approx(p).epsilon(1e-10));
    CHECK(g.cdf(g.quantile(p)) == doctest::Approx(p).epsilon(1e-10));
    CHECK(n.cdf(n.quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
  CHECK(n.quantile(0.5) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK_THROWS_AS(b.quantile(1.5), ValidationError);
}

TEST_CASE("quantiles of a single normal component") {
  const Mixture n(MixtureFamily::normal(1.0), {{1.0, 2.0, 3.0}});
  CHECK(n.quantile(0.975) == doctest::Approx(2.0 + 3.0 * 1.959963984540054).epsilon(1e-9));
}

TEST_CASE("summary by moment mixing") {
  const Mixture n(MixtureFamily::normal(1.0), {{0.5, -1.0, 1.0}, {0.5, 1.0, 1.0}});
  const auto s = n.summarize();
  CHECK(s.mean == doctest::Approx(0.0).scale(1.0));
  CHECK(s.sd == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.quantiles[2] == doctest::Approx(0.0).scale(1.0));

  const Mixture b(MixtureFamily::beta(), {{1.0, 3.0, 5.0}});
  CHECK(b.mean() == doctest::Approx(3.0 / 8.0));
  CHECK(b.variance() == doctest::Approx(15.0 / (64.0 * 9.0)));
}

TEST_CASE("weights are normalised and invalid components rejected") {
  const Mixture m(MixtureFamily::beta(), {{2.0, 1.0, 1.0}, {6.0, 2.0, 2.0}});
  CHECK(m[0].w == doctest::Approx(0.25));
  CHECK(m[1].w == doctest::Approx(0.75));
  CHECK_THROWS_AS(Mixture(MixtureFamily::beta(), {{1.0, -1.0, 1.0}}), ValidationError);
  CHECK_THROWS_AS(Mixture(MixtureFamily::beta(), {}), ValidationError);
  CHECK_THROWS_AS(Mixture(MixtureFamily::normal(1.0), {{1.0, 0.0, 0.0}}), ValidationError);
  CHECK_THROWS_AS(Mixture(MixtureFamily::gamma(), {{-0.5, 1.0, 1.0}}), ValidationError);
}

TEST_CASE("combine") {
  const Mixture u(MixtureFamily::beta(), {{1.0, 1.0, 1.0}});
  const Mixture v(MixtureFamily::beta(), {{1.0, 2.0, 2.0}});
  const Mixture both[] = {u, v};
  const double w[] = {1.0, 1.0};
  const auto c = combine(both, w);
  REQUIRE(c.size() == 2);
  CHECK(c[0].w == doctest::Approx(0.5));

  const Mixture parts[] = {as_mixture(), u};
  const double w2[] = {0.8, 0.2};
  const auto c2 = combine(parts, w2);
  CHECK(c2.size() == 5);
  double total = 0.0;
  for (const auto& comp : c2.components()) total += comp.w;
  CHECK(total == doctest::Approx(1.0));

  const Mixture n1(MixtureFamily::normal(1.0), {{1.0, 0.0, 1.0}});
  const Mixture n2(MixtureFamily::normal(2.0), {{1.0, 0.0, 1.0}});
  const Mixture bad[] = {n1, n2};
  CHECK_THROWS_AS(combine(bad, w), ValidationError);
}

TEST_CASE("robustify") {
  const auto map = as_mixture();
  const auto r = robustify(map, 0.2, 0.5);
  REQUIRE(r.size() == 5);
  for (std::size_t k = 0; k < 4; ++k) CHECK(r[k].w == doctest::Approx(0.8 * map[k].w));
  CHECK(r[4].w == doctest::Approx(0.2));
  // The default convention makes the vague component uniform at mean 1/2.
  CHECK(r[4].a == doctest::Approx(1.0));
  CHECK(r[4].b == doctest::Approx(1.0));

  const auto rn = robustify(map, 0.2, 0.5, 1.0, VagueConvention::mean_n);
  CHECK(rn[4].a == doctest::Approx(0.5));
  const auto ro = robustify(map, 0.2, 0.5, 1.0, VagueConvention::offset_one);
  CHECK(ro[4].a == doctest::Approx(1.5));
  CHECK(ro[4].b == doctest::Approx(1.5));

  const Mixture n(MixtureFamily::normal(1.0), {{1.0, 3.0, 0.5}});
  const auto rnorm = robustify(n, 0.5, 0.0, 1.0);
  CHECK(rnorm[1].a == doctest::Approx(0.0).scale(1.0));
  CHECK(rnorm[1].b == doctest::Approx(1.0));

  CHECK_THROWS_AS(robustify(map, 0.2, 1.5), ValidationError);
  CHECK_THROWS_AS(robustify(map, 1.0, 0.5), ValidationError);
  for (auto c : {VagueConvention::mean_n, VagueConvention::offset_one, VagueConvention::total_n_plus_one})
    CHECK(vague_convention_from_string(to_string(c)) == c);
}

TEST_CASE("sampling reproduces moments and is seeded") {
  const auto map = as_mixture();
  const auto xs = map.sample(200000, 11);
  double m = 0.0;
  for (double x : xs) m += x;
  m /= double(xs.size());
  CHECK(m == doctest::Approx(map.mean()).epsilon(0.005));
  CHECK(map.sample(10, 5) == map.sample(10, 5));
  CHECK(map.sample(10, 5) != map.sample(10, 6));
}

TEST_CASE("difference distribution") {
  const auto map = as_mixture();
  const Mixture trt(MixtureFamily::beta(), {{1.0, 12.5, 13.0}});
  // Both quadrature routes and a Monte Carlo estimate agree.
  for (double d : {-0.2, 0.0, 0.15, 0.4}) {
    const double r1 = detail::diff_cdf_over_second(trt, map, d, Link::identity);
    const double r2 = detail::diff_cdf_over_first(trt, map, d, Link::identity);
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-8));
  }
  const auto diff = diff_sample(trt, map, 400000, 3);
  for (double d : {-0.1, 0.1, 0.3}) {
    const double mc = double(std::count_if(diff.begin(), diff.end(), [d](double x) { return x <= d; })) /
                      double(diff.size());
    const double se = std::sqrt(mc * (1 - mc) / double(diff.size()));
    CHECK(std::abs(diff_cdf(trt, map, d) - mc) < 4 * se + 1e-6);
  }
  CHECK(diff_cdf(trt, map, diff_quantile(trt, map, 0.3)) == doctest::Approx(0.3).epsilon(1e-9));

  // Logit scale against a direct double integral.
  const Mixture a(MixtureFamily::beta(), {{1.0, 3.0, 4.0}});
  const Mixture b(MixtureFamily::beta(), {{1.0, 5.0, 2.0}});
  const double want = oracle::simpson(
      [&](double x2) {
        const double lim = 1.0 / (1.0 + std::exp(-(std::log(x2 / (1 - x2)) + 0.3)));
        return oracle::beta_pdf(x2, 5.0, 2.0) *
               oracle::simpson([](double x1) { return oracle::beta_pdf(x1, 3.0, 4.0); }, 0.0, lim, 400);
      },
      0.0, 1.0, 2000);
  CHECK(diff_cdf(a, b, 0.3, Link::logit) == doctest::Approx(want).epsilon(1e-6));

  // Normal identity case is exact.
  const Mixture n1(MixtureFamily::normal(1.0), {{1.0, 1.0, 0.6}});
  const Mixture n2(MixtureFamily::normal(1.0), {{1.0, 0.2, 0.8}});
  CHECK(diff_cdf(n1, n2, 0.5) == doctest::Approx(oracle::normal_cdf(0.5, 0.8, 1.0)).epsilon(1e-12));
  const double dens = (diff_cdf(n1, n2, 0.5 + 1e-5) - diff_cdf(n1, n2, 0.5 - 1e-5)) / 2e-5;
  CHECK(diff_density(n1, n2, 0.5) == doctest::Approx(dens).epsilon(1e-6));

  CHECK_THROWS_AS(diff_cdf(n1, map, 0.0), ValidationError);
}

TEST_CASE("bundled MAP mixture upper quantile") {
  CHECK(std::abs(as_mixture().quantile(0.975) - 0.48) < 0.01);
}
