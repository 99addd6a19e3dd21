#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mapkit/design.hpp"
#include "mapkit/map_mcmc.hpp"
#include "mapkit/serialize.hpp"

namespace mapkit {

/// Reads a study CSV with a header row: `study,r,n` (beta), `study,y,se`
/// (normal) or `study,count,exposure` (gamma). Errors name the line.
StudyDataset ingest_csv(const std::filesystem::path& path, const MixtureFamily& family);
StudyDataset parse_csv(std::istream& in, const MixtureFamily& family, const std::string& source = "input");

/// Total sample size of a dataset: patients (binomial), exposure (poisson)
/// or observations sigma^2 / se^2 (normal).
double total_size(const StudyDataset& data);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

Interval clopper_pearson(long r, long n, double level = 0.95);
/// Exact interval of a poisson rate from the gamma / chi-square relation.
Interval poisson_exact(long count, double exposure, double level = 0.95);
Interval wald(double estimate, double se, double level = 0.95);

struct ForestRow {
  std::string label;
  /// Observed estimate and frequentist interval; absent for the model rows.
  std::optional<double> estimate;
  std::optional<Interval> confidence;
  double median = 0.0;  ///< shrinkage (or model) posterior median
  Interval credible;
};

/// Study rows in input order followed by "typical" and "MAP", all on the
/// response scale.
struct ForestPlotData {
  std::vector<ForestRow> rows;
};

ForestPlotData forest_plot(const MapAnalysis& analysis);
std::string forest_svg(const ForestPlotData& data);

void to_json(json& j, const ForestPlotData& f);
void from_json(const json& j, ForestPlotData& f);

/// Histogram of draws next to the mixture density on a grid over the same
/// range, for checking a parametric approximation by eye.
struct DensityOverlay {
  std::vector<double> bin_edges;
  std::vector<double> bin_density;
  std::vector<double> grid;
  std::vector<double> mixture_density;
};

DensityOverlay density_overlay(std::span<const double> draws, const Mixture& mix, std::size_t bins = 40,
                               std::size_t points = 201);

void to_json(json& j, const DensityOverlay& d);

/// Parameters of a pipeline run. Read from a JSON document; CLI flags may
/// override fields before `validate`.
struct RunConfig {
  std::string data;
  std::string family = "beta";
  std::optional<double> sigma;
  std::string likelihood = "poisson";
  HyperPriors priors;
  McmcOptions mcmc;
  std::size_t k_max = 4;
  double robust_weight = 0.2;
  /// Mean of the vague component; the mixture mean when unset.
  std::optional<double> robust_mean;
  double robust_n = 1.0;
  VagueConvention convention = default_vague_convention;
  /// Two-sample design of a new trial: arm 1 is the treatment arm with its
  /// own prior, arm 2 the control arm with the derived (robust) prior.
  std::optional<DecisionFunction> decision;
  std::optional<Mixture> treatment_prior;
  double n1 = 0.0;
  double n2 = 0.0;
  std::vector<double> oc_grid{0.25, 0.5, 0.75};

  MixtureFamily mixture_family() const;
  bool has_design() const { return decision && treatment_prior; }
  void validate() const;
};

RunConfig run_config_from_json(const json& j);
void to_json(json& j, const RunConfig& c);

/// Runs map -> fit -> robustify -> ess -> design. Every stage writes
/// `<stage>.json` into `out_dir` (when not empty) and the combined report is
/// returned and written as `report.json`. Errors carry the stage name.
json run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir);

/// Writes a JSON document with a trailing newline.
void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

}  // namespace mapkit
