#pragma once

// Experiment recipes and the commands behind the command-line front end.
// run_* functions are pure given the recipe; cmd_* functions add file output
// under recipe.out_dir.

#include "tbell/io.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace tbell::cli {

/// Bell-test configurations: I passive + central slot, II passive + all
/// slots, III active switch + all slots.
enum class BellScheme { I, II, III };

std::string to_string(BellScheme s);
BellScheme parse_scheme(const std::string& s);  ///< "I", "II", "III"

struct ScanConfig {
  optics::Party party = optics::Party::Bob;
  double start = 0.0;
  double stop = 2.0 * qcore::kPi;
  std::size_t steps = 16;
  double duration_per_point = 0.2;  ///< [s]

  friend bool operator==(const ScanConfig&, const ScanConfig&) = default;
};

struct ExperimentRecipe {
  BellScheme scheme = BellScheme::I;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  optics::OpticalLayout layout;
  eventsim::SimConfig sim;
  analysis::CoincidencePolicy policy;
  qcore::ChshAngles angles;
  double duration_per_setting = 1.3;  ///< [s]; ~1e6 pairs at the default rates
  ScanConfig scan;
  lock::LockConfig lock;
  lock::DriftModel drift;
  lhv::OptimizerConfig lhv;

  /// Copies the seed into sim and lhv and the sim into lock; clears threads.
  void normalize();
  /// Throws ConfigError with the dotted field path.
  void validate() const;

  friend bool operator==(const ExperimentRecipe&, const ExperimentRecipe&) = default;
};

/// Defaults for a scheme: I -> V 0.95, CentralOnly 2.4 ns; II -> V 0.95,
/// AllSlots 8.1 ns; III -> V 0.89, active switch at pi, AllSlots 8.1 ns.
ExperimentRecipe make_recipe(BellScheme scheme);

io::json to_json(const ExperimentRecipe& r);
/// Unknown fields and type errors throw ConfigError. Fields absent from the
/// file take the defaults of the scheme named in it (or of scheme I).
ExperimentRecipe parse_recipe(const io::json& j);

/// Options that never change results.
struct RunOptions {
  unsigned threads = 0;
  bool dump_tags = false;
};

// ---------------------------------------------------------------------------

struct ScanOutcome {
  std::vector<analysis::ScanPoint> points;  ///< rate of ++ coincidences [1/s]
  analysis::VisibilityFit fit;
  bool short_range = false;  ///< range shorter than half a period
};

ScanOutcome run_scan(const ExperimentRecipe& r, unsigned threads = 0);

struct BellOutcome {
  analysis::BellRunResult result;
  ScanOutcome scan;
  eventsim::SimulationOutput events;
  std::uint64_t coincidences = 0;
};

/// Four-setting CHSH run plus the visibility scan that fills result.visibility.
BellOutcome run_bell(const ExperimentRecipe& r, unsigned threads = 0);

lock::LockTrace run_lock(const ExperimentRecipe& r, unsigned threads = 0);

struct LhvOutcome {
  lhv::LocalStrategy strategy;
  lhv::StrategyReport report;
  std::optional<lhv::OptimizationResult> optimization;
  std::optional<analysis::BellRunResult> pipeline;  ///< attack streams through the standard analysis
};

/// Equal-slot postselection in the pipeline: a slot-blind window narrow enough
/// that tags one slot apart are 5 jitter sigmas outside it (at most 2.4 ns).
analysis::CoincidencePolicy attack_policy(double delta_t, double jitter_sigma);

LhvOutcome run_lhv(const ExperimentRecipe& r, bool optimize, bool through_pipeline, unsigned threads = 0);

// ---------------------------------------------------------------------------
// File-writing commands. Each writes recipe.json, a deterministic result
// file, CSVs, summary.txt, and metadata.json (wall-clock time only there).

analysis::BellRunResult cmd_bell(const ExperimentRecipe& r, const RunOptions& opt, std::ostream& log);
ScanOutcome cmd_scan(const ExperimentRecipe& r, const RunOptions& opt, std::ostream& log);
lock::LockTrace cmd_lock(const ExperimentRecipe& r, const RunOptions& opt, std::ostream& log);
LhvOutcome cmd_lhv(const ExperimentRecipe& r, bool optimize, bool through_pipeline, const RunOptions& opt,
                   std::ostream& log);
/// Folded histograms per party from a tag dump (input non-empty) or a fresh simulation.
void cmd_histogram(const ExperimentRecipe& r, const std::filesystem::path& input, double bin_width,
                   const RunOptions& opt, std::ostream& log);

inline constexpr const char* kLoopholeBanner =
    "!! POSTSELECTION LOOPHOLE: this violation comes from a local hidden-variable model.\n"
    "!! Keeping only equal-slot coincidences lets local slot choices depend on local settings.";

}  // namespace tbell::cli
