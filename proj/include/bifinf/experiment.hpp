#pragma once

// Configuration, staged orchestration of the full pipeline, and report emission.

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bifinf/equilibria.hpp"
#include "bifinf/lyapunov_perron.hpp"
#include "bifinf/nonlinearity.hpp"
#include "bifinf/reduced_dynamics.hpp"
#include "bifinf/semiflow.hpp"
#include "bifinf/spectral.hpp"

namespace bifinf {

enum class Stage { check = 0, manifold = 1, annulus = 2, bifurcate = 3 };

const char* to_string(Stage s);
Stage parse_stage(const std::string& name);

struct NonlinearityConfig {
  std::string name = "tanh";  // tanh | arctan | modulated_tanh | constant | zero
  double c = 0.2;
  double offset = 0.0;
  double d = 0.0;         // modulation amplitude (modulated_tanh)
  double g = 0.0;         // value (constant)
  bool reflect = false;   // apply (x, t) -> -f(x, -t)
};

struct ExperimentConfig {
  std::string name = "experiment";
  DomainSpec domain;
  NonlinearityConfig nonlinearity;
  int k = 1;
  int modes = 0;                    // 0: all modes up to truncation_factor * mu_k
  double truncation_factor = 12.0;

  static constexpr double kAuto = std::numeric_limits<double>::quiet_NaN();
  double lambda = kAuto;            // working lambda; auto: mu_k - sigma beta_k / 60
  double theta = kAuto;             // auto: bisection search on the annulus certificate
  int theta_bisections = 8;
  int grid_count = 9;
  std::vector<double> lambda_grid;  // explicit grid; overrides theta and grid_count

  LPConfig lp;
  bool M_auto = false;              // use the sampled semigroup constant as M

  double graph_radius = 0.0;        // 0: 2 (a + rho) bound
  double graph_spacing = 0.25;      // m = 1 sample spacing
  int graph_radial = 33;            // m = 2 radii including the origin
  int graph_angular = 32;           // m = 2

  int invariance_points = 10;
  double invariance_horizon = 1.0;
  IntegratorConfig integrator;

  double table_spacing = 0.0;       // 0: 0.05 (m = 1) or 0.5 (m = 2)
  int table_angles = 128;
  AttractorConfig attractor;

  MultiplicityConfig multiplicity;
  bool omega_limits = true;
  double consistency_tolerance = 1e-3;

  std::filesystem::path output_dir = "out";
  unsigned long long seed = 1;
  Stage stage = Stage::bifurcate;

  /// Throws PreconditionError naming the offending key.
  void validate() const;
};

/// Reads a sectioned key = value file. Unknown sections or keys are rejected.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies "section.key=value" overrides in order.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& overrides);
/// The config as a flat section.key -> value map (echoed into the report).
std::map<std::string, std::string> config_entries(const ExperimentConfig& config);
/// Comma-separated numbers.
std::vector<double> parse_number_list(const std::string& text);

NonlinearitySpec make_nonlinearity(const NonlinearityConfig& config);

struct Report {
  nlohmann::json data;
  /// file name -> contents, in emission order
  std::vector<std::pair<std::string, std::string>> csv;
  bool aborted = false;
  std::string failed_stage;

  /// Overall verdict over the claims evaluated so far.
  bool pass() const;
};

/// Runs the stages up to config.stage. Module errors abort the run; the report
/// then records the stage, the error kind and message, and keeps the outputs so far.
Report run_experiment(const ExperimentConfig& config);

enum class ReportFormat { csv, json, both };

/// Writes report.json and/or the CSV files into config.output_dir; returns the paths.
std::vector<std::filesystem::path> emit_report(const Report& report,
                                               const std::filesystem::path& dir,
                                               ReportFormat format = ReportFormat::both);

}  // namespace bifinf
