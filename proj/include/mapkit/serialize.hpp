#pragma once

#include <json.hpp>

#include "mapkit/conjugate.hpp"
#include "mapkit/design.hpp"
#include "mapkit/em_fit.hpp"
#include "mapkit/ess.hpp"
#include "mapkit/map_mcmc.hpp"
#include "mapkit/mixture.hpp"

// JSON representations of the library value types. Non-finite numbers are
// written as null; readers map null back to NaN (or +inf where a flag says
// so, e.g. a diverged ESS).

namespace mapkit {

using json = nlohmann::json;

void to_json(json& j, const MixtureFamily& f);
void to_json(json& j, const Mixture& m);
void to_json(json& j, const MixtureSummary& s);
void to_json(json& j, const ObservedData& d);
void to_json(json& j, const PredictiveMixture& p);
void from_json(const json& j, PredictiveMixture& p);
void to_json(json& j, const EmFitResult& r);
void to_json(json& j, const EssResult& r);
void from_json(const json& j, EssResult& r);
void to_json(json& j, const TauPrior& t);
void from_json(const json& j, TauPrior& t);
void to_json(json& j, const HyperPriors& h);
void from_json(const json& j, HyperPriors& h);
void to_json(json& j, const McmcOptions& o);
void from_json(const json& j, McmcOptions& o);
void to_json(json& j, const StudyDataset& d);
void to_json(json& j, const DrawSummary& s);
void from_json(const json& j, DrawSummary& s);
void to_json(json& j, const McmcDiagnostics& d);
void from_json(const json& j, McmcDiagnostics& d);
void to_json(json& j, const ShrinkageRow& r);
void from_json(const json& j, ShrinkageRow& r);
void to_json(json& j, const DecisionFunction& d);
void from_json(const json& j, DecisionFunction& d);
void to_json(json& j, const Design& d);
void to_json(json& j, const CriticalValue& c);
void from_json(const json& j, CriticalValue& c);
void to_json(json& j, const Boundary& b);
void from_json(const json& j, Boundary& b);

MixtureFamily family_from_json(const json& j);
Mixture mixture_from_json(const json& j);
ObservedData observed_data_from_json(const json& j);
EmFitResult em_fit_result_from_json(const json& j);
StudyDataset study_dataset_from_json(const json& j);
Design design_from_json(const json& j);

/// MapAnalysis as summaries (theta*, mu, tau, shrinkage, diagnostics) and,
/// with `include_draws`, the full draws as flat arrays per parameter and
/// chain. Only a document with draws can be read back.
json map_analysis_to_json(const MapAnalysis& a, bool include_draws);
MapAnalysis map_analysis_from_json(const json& j);

/// Number or null for non-finite values.
json finite_or_null(double x);
double number_or_nan(const json& j);

}  // namespace mapkit

namespace nlohmann {

template <>
struct adl_serializer<mapkit::Mixture> {
  static mapkit::Mixture from_json(const json& j) { return mapkit::mixture_from_json(j); }
  static void to_json(json& j, const mapkit::Mixture& m) { mapkit::to_json(j, m); }
};

template <>
struct adl_serializer<mapkit::MixtureFamily> {
  static mapkit::MixtureFamily from_json(const json& j) { return mapkit::family_from_json(j); }
  static void to_json(json& j, const mapkit::MixtureFamily& f) { mapkit::to_json(j, f); }
};

}  // namespace nlohmann
