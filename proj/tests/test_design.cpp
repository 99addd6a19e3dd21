#include <doctest.h>

#include <cmath>
#include <random>

#include "design_oracle.hpp"
#include "mapkit/design.hpp"

using namespace mapkit;

namespace {

Mixture beta1(double a, double b) { return Mixture(MixtureFamily::beta(), {{1.0, a, b}}); }

Mixture as_mixture() {
  return Mixture(MixtureFamily::beta(), {{0.4652656, 31.0317022, 96.5540272},
                                         {0.2038402, 21.3507421, 42.9105627},
                                         {0.1955961, 10.2829720, 45.1537087},
                                         {0.1352982, 2.2980848, 5.0607874}});
}

Design as_design(const Mixture& control) {
  const double p[] = {0.95}, q[] = {0.0};
  return Design{decision2S(p, q, false), beta1(0.5, 1.0), 24, control, 6};
}

}  // namespace

TEST_CASE("two-sample binomial designs agree with exhaustive evaluation") {
  std::mt19937_64 rng(99);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_binomial_design(rng, 30);
    CAPTURE(rep);
    const auto table = oracle::decision_table(d);
    CHECK(oracle::boundary_matches(d, table));
    const DesignEvaluator eval(d);
    for (double t1 : {0.1, 0.4, 0.7})
      for (double t2 : {0.2, 0.5, 0.9})
        CHECK(std::abs(eval.oc(t1, t2) - oracle::brute_force_oc(table, long(d.n1), long(d.n2), t1, t2)) < 1e-12);
  }
}

TEST_CASE("one-sample binomial boundaries, both orientations") {
  for (bool lower : {true, false}) {
    for (long n : {1L, 7L, 20L, 30L}) {
      const double p[] = {0.9}, q[] = {0.3};
      const Design d{decision1S(p, q, lower), beta1(1.0, 2.0), double(n), std::nullopt, 1.0};
      const auto table = oracle::decision_table(d);
      CHECK(oracle::boundary_matches(d, table));
      const auto oc = oc1S(d);
      for (double t : {0.1, 0.3, 0.5})
        CHECK(std::abs(oc(t) - oracle::brute_force_oc(table, n, 0, t, 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("ties fail the criterion") {
  // A symmetric posterior puts exactly half of its mass below 1/2.
  const double p[] = {0.5}, q[] = {0.5};
  const auto d = decision1S(p, q, true);
  CHECK_FALSE(evaluate_decision(d, beta1(3.0, 3.0)));
  CHECK(evaluate_decision(d, beta1(3.0, 3.5)));
}

TEST_CASE("bundled design reproduces its operating characteristics") {
  const auto oc = oc2S(as_design(as_mixture()));
  CHECK(oc(0.25, 0.25) == doctest::Approx(0.020).epsilon(0.1));
  CHECK(oc(0.5, 0.5) == doctest::Approx(0.320).epsilon(0.01));
  CHECK(oc(0.75, 0.75) == doctest::Approx(0.598).epsilon(0.01));
  const double t1[] = {0.25, 0.5}, t2[] = {0.25, 0.5};
  const auto v = oc2S(as_design(as_mixture()), t1, t2);
  CHECK(v[1] == doctest::Approx(oc(0.5, 0.5)));
}

TEST_CASE("normal designs against closed forms") {
  const double sigma = 2.0;
  const auto fam = MixtureFamily::normal(sigma);
  SUBCASE("one-sample") {
    const Mixture prior(fam, {{1.0, 0.2, 0.5}});
    const double n = 20;
    const double p[] = {0.975}, q[] = {0.0};
    const Design d{decision1S(p, q, false), prior, n, std::nullopt, 1.0};
    // Success iff the posterior mean exceeds z times the posterior sd.
    const double prec = 1.0 / 0.25 + n / (sigma * sigma);
    const double z = 1.959963984540054;
    const double crit = (z * std::sqrt(prec) - 0.2 / 0.25) / (n / (sigma * sigma));
    const auto cv = decision1S_boundary(d);
    CHECK(cv.critical == doctest::Approx(crit).epsilon(1e-7));
    const auto oc = oc1S(d);
    for (double t : {-0.5, 0.0, 0.5, 1.0}) {
      const double want = 1.0 - oracle::normal_cdf(crit, t, sigma / std::sqrt(n));
      CHECK(std::abs(oc(t) - want) < 1e-7);
    }
  }
  SUBCASE("two-sample") {
    const Mixture p1(fam, {{1.0, 0.0, 1.0}}), p2(fam, {{1.0, 0.1, 0.4}});
    const double n1 = 30, n2 = 15;
    const double pp[] = {0.9}, qq[] = {0.0};
    const Design d{decision2S(pp, qq, false), p1, n1, p2, n2};
    // Posterior means are A_i + B_i ybar_i with fixed posterior variances.
    const double s2 = sigma * sigma;
    const double prec1 = 1.0 + n1 / s2, prec2 = 1.0 / 0.16 + n2 / s2;
    const double B1 = (n1 / s2) / prec1, A1 = 0.0;
    const double B2 = (n2 / s2) / prec2, A2 = (0.1 / 0.16) / prec2;
    const double z = 1.2815515655446004;
    const double c = z * std::sqrt(1.0 / prec1 + 1.0 / prec2) - (A1 - A2);
    const auto oc = oc2S(d);
    for (auto [t1, t2] : {std::pair{0.0, 0.0}, {0.5, 0.0}, {1.0, 0.2}}) {
      const double m = B1 * t1 - B2 * t2;
      const double s = std::sqrt(B1 * B1 * s2 / n1 + B2 * B2 * s2 / n2);
      CHECK(std::abs(oc(t1, t2) - (1.0 - oracle::normal_cdf(c, m, s))) < 1e-6);
    }
  }
}

TEST_CASE("poisson designs against direct sums") {
  const auto fam = MixtureFamily::gamma();
  SUBCASE("one-sample") {
    const Mixture prior(fam, {{0.6, 2.0, 2.0}, {0.4, 5.0, 1.0}});
    const double p[] = {0.9}, q[] = {1.5};
    const Design d{decision1S(p, q, true), prior, 10.0, std::nullopt, 1.0};
    const DesignEvaluator eval(d);
    for (double t : {0.5, 1.0, 2.0}) {
      double want = 0.0;
      for (long y = 0; y < 200; ++y)
        if (eval.decide(double(y))) want += oracle::poisson_pmf(y, t * 10.0);
      CHECK(std::abs(eval.oc(t) - want) < 1e-10);
    }
  }
  SUBCASE("two-sample") {
    const Mixture p1(fam, {{1.0, 1.0, 1.0}}), p2(fam, {{1.0, 3.0, 2.0}});
    const double p[] = {0.8}, q[] = {0.0};
    const Design d{decision2S(p, q, true, Link::log), p1, 8.0, p2, 5.0};
    const DesignEvaluator eval(d);
    for (auto [t1, t2] : {std::pair{1.0, 1.5}, {0.8, 2.0}}) {
      double want = 0.0;
      for (long y2 = 0; y2 < 60; ++y2) {
        const auto cv = eval.critical(double(y2));
        double inner = 0.0;
        for (long y1 = 0; y1 < 80; ++y1)
          if (cv.success(double(y1), eval.upper_side())) inner += oracle::poisson_pmf(y1, t1 * 8.0);
        want += inner * oracle::poisson_pmf(y2, t2 * 5.0);
      }
      // Arm-2 outcomes beyond the 1 - 1e-6 predictive quantile are dropped.
      CHECK(std::abs(eval.oc(t1, t2) - want) < 2e-6);
    }
    // The critical value agrees with the decision on both sides.
    for (long y2 : {0L, 3L, 9L}) {
      const auto cv = eval.critical(double(y2));
      if (cv.status == BoundaryStatus::regular) {
        CHECK(eval.decide(cv.critical, double(y2)));
        CHECK_FALSE(eval.decide(cv.critical + 1, double(y2)));
      }
    }
  }
}

TEST_CASE("probability of success") {
  const auto design = as_design(as_mixture());
  const DesignEvaluator eval(design);
  SUBCASE("a concentrated prior gives the conditional power") {
    const double t = 0.4;
    const auto point1 = beta1(t * 1e6, (1 - t) * 1e6);
    const auto point2 = beta1(0.3 * 1e6, 0.7 * 1e6);
    CHECK(std::abs(eval.pos(point1, &point2) - eval.oc(0.4, 0.3)) < 1e-3);
  }
  SUBCASE("equals conditional power integrated against the prior") {
    const double p[] = {0.9}, q[] = {0.2};
    const Design d1{decision1S(p, q, false), beta1(1.0, 1.0), 15, std::nullopt, 1.0};
    const auto prior = beta1(3.0, 6.0);
    const auto oc = oc1S(d1);
    const double want = oracle::simpson([&](double t) { return oc(t) * oracle::beta_pdf(t, 3.0, 6.0); }, 0.0, 1.0, 2000);
    CHECK(std::abs(pos1S(d1, prior) - want) < 1e-4);
  }
  SUBCASE("two-sample against Monte Carlo") {
    const auto trt = beta1(15.5, 10.0);
    const auto ctl = as_mixture();
    std::mt19937_64 rng(8);
    const long reps = 200000;
    long hits = 0;
    const auto table = oracle::decision_table(design);
    for (long i = 0; i < reps; ++i) {
      const double t1 = trt.draw(rng), t2 = ctl.draw(rng);
      const long y1 = std::binomial_distribution<long>(24, t1)(rng);
      const long y2 = std::binomial_distribution<long>(6, t2)(rng);
      hits += table[std::size_t(y1)][std::size_t(y2)];
    }
    const double mc = double(hits) / double(reps);
    const double se = std::sqrt(mc * (1 - mc) / double(reps));
    CHECK(std::abs(pos2S(design, trt, ctl) - mc) < 4 * se);
  }
  SUBCASE("empty success region") {
    const double p[] = {0.99}, q[] = {0.99};
    const Design d{decision2S(p, q, false), beta1(1, 1), 10, beta1(1, 1), 10};
    CHECK(pos2S(d, beta1(2, 2), beta1(2, 2)) == 0.0);
    CHECK(decision2S_boundary(d).critical_y1.front().status == BoundaryStatus::empty);
  }
}

TEST_CASE("conditional power increases with the treatment effect") {
  const auto oc = oc2S(as_design(as_mixture()));
  double last = 0.0;
  for (double t1 = 0.05; t1 < 1.0; t1 += 0.05) {
    const double v = oc(t1, 0.3);
    CHECK(v >= last - 1e-14);
    last = v;
  }
}

TEST_CASE("a strictly weaker extra criterion changes nothing") {
  const double p1[] = {0.95}, q1[] = {0.0};
  const double p2[] = {0.95, 0.5}, q2[] = {0.0, -0.1};
  Design d1{decision2S(p1, q1, false), beta1(1, 1), 12, beta1(2, 3), 10};
  Design d2 = d1;
  d2.decision = decision2S(p2, q2, false);
  const auto t1 = oracle::decision_table(d1), t2 = oracle::decision_table(d2);
  CHECK(t1 == t2);
  const auto b1 = decision2S_boundary(d1), b2 = decision2S_boundary(d2);
  REQUIRE(b1.critical_y1.size() == b2.critical_y1.size());
  for (std::size_t i = 0; i < b1.critical_y1.size(); ++i) {
    CHECK(b1.critical_y1[i].status == b2.critical_y1[i].status);
    if (b1.critical_y1[i].status == BoundaryStatus::regular)
      CHECK(b1.critical_y1[i].critical == b2.critical_y1[i].critical);
  }
  CHECK(oc2S(d1)(0.6, 0.3) == oc2S(d2)(0.6, 0.3));
}

TEST_CASE("design validation") {
  const double p[] = {0.95}, q[] = {0.0};
  CHECK_THROWS_AS(DesignEvaluator(Design{decision2S(p, q, false), beta1(1, 1), 10.5, beta1(1, 1), 5}), ValidationError);
  CHECK_THROWS_AS(DesignEvaluator(Design{decision2S(p, q, false), beta1(1, 1), 10, std::nullopt, 5}), ValidationError);
  const Mixture g(MixtureFamily::gamma(), {{1.0, 1.0, 1.0}});
  CHECK_THROWS_AS(DesignEvaluator(Design{decision2S(p, q, false), beta1(1, 1), 10, g, 5}), ValidationError);
  const DesignEvaluator eval(as_design(as_mixture()));
  CHECK_THROWS_AS(eval.oc(1.5, 0.5), ValidationError);
  CHECK_THROWS_AS(eval.pos(g, &g), ValidationError);
  const double bad_p[] = {1.0};
  CHECK_THROWS_AS(decision1S(bad_p, q, true), ValidationError);
  CHECK_THROWS_AS(decision1S(p, std::span<const double>{}, true), ValidationError);
}
