#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "mapkit/conjugate.hpp"

namespace mapkit {

enum class Arity { one_sample, two_sample };

/// One criterion: P(Delta <= q) > p (lower tail) or P(Delta > q) > p.
struct Criterion {
  double p = 0.5;
  double q = 0.0;

  friend bool operator==(const Criterion&, const Criterion&) = default;
};

/// Product of Heaviside indicators over the criteria; an indicator at an
/// exact tie is 0. Delta is theta (one-sample) or g(theta1) - g(theta2).
struct DecisionFunction {
  std::vector<Criterion> criteria;
  bool lower_tail = true;
  Arity arity = Arity::one_sample;
  Link link = Link::identity;

  void validate() const;
  friend bool operator==(const DecisionFunction&, const DecisionFunction&) = default;
};

DecisionFunction decision1S(std::span<const double> p, std::span<const double> q, bool lower_tail);
DecisionFunction decision2S(std::span<const double> p, std::span<const double> q, bool lower_tail,
                            Link link = Link::identity);

/// Tail probabilities of every criterion (P(Delta <= q) or P(Delta > q)
/// according to the orientation).
std::vector<double> criterion_probabilities(const DecisionFunction& d, const Mixture& post1,
                                            const Mixture* post2 = nullptr);
bool evaluate_decision(const DecisionFunction& d, const Mixture& post1, const Mixture* post2 = nullptr);

/// Priors per arm, per-arm sample sizes (trial size, number of observations
/// or exposure) and the decision. The outcome of a normal arm is the sample
/// mean, of a binomial arm the responder count, of a poisson arm the count.
struct Design {
  DecisionFunction decision;
  Mixture prior1;
  double n1 = 1.0;
  std::optional<Mixture> prior2;
  double n2 = 1.0;

  void validate() const;
};

/// Converts an outcome of an arm of the given family into observed data.
ObservedData make_outcome(const MixtureFamily& family, double y, double n);

enum class BoundaryStatus { regular, empty, full };

std::string_view to_string(BoundaryStatus status);

/// Critical outcome of arm 1. With `upper_side` the decision is success iff
/// y1 >= critical, otherwise iff y1 <= critical. Empty and full regions carry
/// no critical value (NaN).
struct CriticalValue {
  BoundaryStatus status = BoundaryStatus::regular;
  double critical = 0.0;

  bool success(double y1, bool upper_side) const;
};

struct Boundary {
  Arity arity = Arity::one_sample;
  bool upper_side = true;
  CriticalValue one_sample;
  /// Two-sample: tabulated y2 values and the critical y1 for each.
  std::vector<double> y2;
  std::vector<CriticalValue> critical_y1;
  /// The critical y1 is monotone in y2 over the table.
  bool monotone = true;
};

/// Evaluates a design; the boundary of a discrete outcome space is computed
/// once and cached, so the object is safe to share between threads.
class DesignEvaluator {
 public:
  explicit DesignEvaluator(Design design);

  const Design& design() const { return design_; }
  bool upper_side() const { return !design_.decision.lower_tail; }

  /// Decision at the outcomes of a trial.
  bool decide(double y1, double y2 = 0.0) const;
  /// Critical y1 (for the given y2 when two-sample).
  CriticalValue critical(double y2 = 0.0) const;
  Boundary boundary() const;

  /// Probability of success given the true parameters.
  double oc(double theta1, double theta2 = 0.0) const;
  /// Probability of success averaged over priors of the true parameters.
  double pos(const Mixture& theta1_prior, const Mixture* theta2_prior = nullptr) const;

 private:
  CriticalValue search(double y2) const;
  /// Probability that arm 1 lands on the success side of `cv`, given a
  /// sampling distribution or a predictive mixture.
  double arm1_success(const CriticalValue& cv, double theta1) const;
  double arm1_success_predictive(const CriticalValue& cv, const PredictiveMixture& pred) const;
  /// Sums or integrates h(y2) over the arm-2 outcome distribution.
  double over_arm2(const std::function<double(double)>& h, double theta2) const;
  double over_arm2_predictive(const std::function<double(double)>& h, const PredictiveMixture& pred) const;

  Design design_;
  mutable std::once_flag table_once_;
  mutable std::vector<CriticalValue> table_;  // binomial two-sample, y2 = 0..n2
  mutable std::mutex memo_mutex_;
  mutable std::map<long, CriticalValue> memo_;  // poisson two-sample
};

CriticalValue decision1S_boundary(const Design& design);
Boundary decision2S_boundary(const Design& design);

/// Conditional power as a function of the true parameter(s).
std::function<double(double)> oc1S(const Design& design);
std::function<double(double, double)> oc2S(const Design& design);
std::vector<double> oc2S(const Design& design, std::span<const double> theta1,
                         std::span<const double> theta2);

double pos1S(const Design& design, const Mixture& theta_prior);
double pos2S(const Design& design, const Mixture& theta1_prior, const Mixture& theta2_prior);

/// Probability mass left out of the outcome range of unbounded outcome spaces.
inline constexpr double kOutcomeEpsilon = 1e-6;

}  // namespace mapkit
