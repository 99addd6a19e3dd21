#include <doctest.h>

#include <cmath>
#include <random>

#include "bayes_oracle.hpp"
#include "mapkit/conjugate.hpp"

using namespace mapkit;

TEST_CASE("posterior update follows Bayes' rule") {
  std::mt19937_64 rng(2024);
  for (Family f : {Family::beta, Family::normal, Family::gamma}) {
    for (int rep = 0; rep < 8; ++rep) {
      const auto [prior, data] = oracle::random_case(f, rng);
      CAPTURE(to_string(f));
      CAPTURE(rep);
      CHECK(oracle::bayes_sup_error(prior, data) < 1e-6);
    }
  }
}

TEST_CASE("beta-binomial update by hand") {
  const Mixture prior(MixtureFamily::beta(), {{0.5, 1.0, 1.0}, {0.5, 10.0, 10.0}});
  const auto post = posterior_update(prior, BinomialData{2, 10});
  CHECK(post[0].a == 3.0);
  CHECK(post[0].b == 9.0);
  CHECK(post[1].a == 12.0);
  CHECK(post[1].b == 18.0);
  // Weights are proportional to the beta-binomial marginal likelihoods.
  const auto bb = [](double a, double b) {
    return std::lgamma(a + 2) + std::lgamma(b + 8) - std::lgamma(a + b + 10) - std::lgamma(a) - std::lgamma(b) +
           std::lgamma(a + b);
  };
  const double l1 = std::exp(bb(1, 1)), l2 = std::exp(bb(10, 10));
  CHECK(post[0].w == doctest::Approx(l1 / (l1 + l2)).epsilon(1e-12));
}

TEST_CASE("marginal likelihood includes normalising constants") {
  const MixtureFamily beta = MixtureFamily::beta();
  // Beta(1,1) gives a uniform predictive over 0..n.
  CHECK(std::exp(log_marginal_likelihood(beta, {1, 1, 1}, BinomialData{3, 9})) == doctest::Approx(0.1));
  const MixtureFamily normal = MixtureFamily::normal(2.0);
  const double v = 0.5 * 0.5 + 4.0 / 4.0;
  CHECK(std::exp(log_marginal_likelihood(normal, {1, 0.3, 0.5}, NormalData{1.0, 4.0})) ==
        doctest::Approx(oracle::normal_pdf(1.0, 0.3, std::sqrt(v))).epsilon(1e-12));
  // Poisson-gamma: negative binomial, sum over counts is one.
  const MixtureFamily gamma = MixtureFamily::gamma();
  double total = 0.0;
  for (long y = 0; y < 400; ++y) total += std::exp(log_marginal_likelihood(gamma, {1, 2.5, 1.5}, PoissonData{y, 3.0}));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("mean/n and mean/sd parameterisations") {
  const auto [a, b] = from_mean_n(MixtureFamily::beta(), 0.25, 20);
  CHECK(a == doctest::Approx(5.0));
  CHECK(b == doctest::Approx(15.0));
  const auto [ga, gb] = from_mean_n(MixtureFamily::gamma(), 2.0, 4);
  CHECK(ga / gb == doctest::Approx(2.0));
  CHECK(gb == doctest::Approx(4.0));
  const auto [nm, ns] = from_mean_n(MixtureFamily::normal(3.0), 1.0, 9);
  CHECK(nm == 1.0);
  CHECK(ns == doctest::Approx(1.0));

  const auto [ma, mb] = from_mean_sd(MixtureFamily::beta(), 0.3, 0.1);
  CHECK(ma / (ma + mb) == doctest::Approx(0.3));
  CHECK(ma * mb / ((ma + mb) * (ma + mb) * (ma + mb + 1)) == doctest::Approx(0.01));
  CHECK_THROWS_AS(from_mean_sd(MixtureFamily::beta(), 0.5, 0.6), ValidationError);
  CHECK_THROWS_AS(from_mean_n(MixtureFamily::beta(), 1.5, 1), ValidationError);
}

TEST_CASE("predictive distributions") {
  const Mixture prior(MixtureFamily::beta(), {{0.3, 2.0, 5.0}, {0.7, 6.0, 3.0}});
  const auto pred = predictive(prior, 12);
  CHECK(pred.family == PredictiveFamily::beta_binomial);
  double total = 0.0, mean = 0.0;
  for (int y = 0; y <= 12; ++y) {
    // Beta-binomial pmf by integrating the binomial against the prior.
    const double want = oracle::simpson(
        [&](double t) { return oracle::prior_density(prior, t) * oracle::binom_pmf(y, 12, t); }, 0.0, 1.0, 4000);
    CHECK(pred.pmf(y) == doctest::Approx(want).epsilon(1e-8));
    total += pred.pmf(y);
    mean += y * pred.pmf(y);
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(pred.mean() == doctest::Approx(mean));
  CHECK(pred.mean() == doctest::Approx(12 * prior.mean()));
  CHECK(pred.cdf(12) == doctest::Approx(1.0));
  CHECK(pred.cdf(pred.quantile(0.4)) >= 0.4);
  CHECK(pred.cdf(pred.quantile(0.4) - 1) < 0.4);

  const Mixture g(MixtureFamily::gamma(), {{1.0, 3.0, 2.0}});
  const auto nb = predictive(g, 4.0);
  CHECK(nb.mean() == doctest::Approx(4.0 * 1.5));

  const Mixture n(MixtureFamily::normal(2.0), {{1.0, 1.0, 0.5}});
  const auto pn = predictive(n, 16);
  CHECK(pn.components[0].b == doctest::Approx(std::sqrt(0.25 + 0.25)));
  CHECK_THROWS_AS(predictive(prior, 2.5), ValidationError);
}

TEST_CASE("invalid data") {
  const Mixture prior(MixtureFamily::beta(), {{1.0, 1.0, 1.0}});
  CHECK_THROWS_AS(posterior_update(prior, BinomialData{5, 3}), ValidationError);
  CHECK_THROWS_AS(posterior_update(prior, BinomialData{-1, 3}), ValidationError);
  CHECK_THROWS_AS(posterior_update(prior, NormalData{0.0, 1.0}), ValidationError);
  const Mixture ex(MixtureFamily::gamma(GammaLikelihood::exponential), {{1.0, 2.0, 1.0}});
  CHECK_THROWS_AS(posterior_update(ex, PoissonData{3, 1.0}), ValidationError);
  CHECK(NormalData::from_se(0.5, 0.25, 1.0).n == doctest::Approx(16.0));
}
