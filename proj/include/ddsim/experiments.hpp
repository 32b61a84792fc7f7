#pragma once

// Experiment harness: flat key-value specs, deterministic CSV outputs, a
// machine-readable run manifest, and the figure-family pipelines (sequence
// derivation, echo/relaxation/concurrence curves, insertion comparison,
// stroboscopic effective dynamics, N_op sweeps, oracle cross-checks and
// suppression-slope checks).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddsim/dynamics.hpp"
#include "ddsim/free_fermion.hpp"
#include "ddsim/solver.hpp"
#include "ddsim/spin_model.hpp"

namespace ddsim {

enum class ExperimentKind {
  DeriveSequences,
  EchoCurve,
  ConcurrenceCurve,
  RelaxationCurve,
  InsertionComparison,
  EffectiveDynamics,
  NopSweep,
  OracleCrossCheck,
  SlopeCheck,
};

std::string kind_name(ExperimentKind k);
ExperimentKind kind_from_name(const std::string& name);

struct GridSpec {
  double lo = 0, hi = 0;
  int n = 0;
  bool logspace = false;

  std::vector<double> values() const;
};

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::EchoCurve;
  ModelConfig model;

  // sequence selection: free | catalog:<name> | udd:<N>:<axis> | qdd:<N> | file:<path>
  std::string sequence = "free";
  std::vector<std::string> sequences;  // comparison/sweep sets

  PulseMode mode = PulseMode::Ideal;
  double b_tesla = 0;          // > 0 fixes J tau_p = 10 pi J / B
  std::string period = "1.0";  // J T value, or "tc" for tau_p / min(alpha)
  int n_cycles = 1;
  ComputingInsertion insertion = ComputingInsertion::None;
  double theta = 0;

  EngineKind engine = EngineKind::Auto;
  double dt = 0.005;

  std::string initial = "plus_x";  // plus_x | up | bell | product
  std::string bath_state = "ground";  // ground | excited
  std::string observable = "echo";    // echo | concurrence | sigma_z (sweeps)
  int samples = 41;
  std::string curve = "within_cycle";  // within_cycle | period_sweep
  std::optional<GridSpec> t_grid;
  std::vector<double> b_list;
  std::vector<double> theta_list;
  std::vector<int> l_list;  // oracle cross-check chain lengths

  // derivation
  int order = 2;
  std::string pattern = "xzxzxz";  // direction string or "census"
  std::uint64_t seed = 20260810;
  int n_starts = 200;

  std::string label = "run";

  void validate() const;
};

ExperimentSpec parse_experiment(const std::string& text, const std::string& name);
std::string serialize_experiment(const ExperimentSpec& spec);
ExperimentSpec load_experiment(const std::string& path);

// Resolves a sequence token against the catalog / UDD / QDD / file formats.
// Returns the sequence (period 1, ideal width) and its nominal order when
// known (-1 for generators without one).
std::pair<DDSequence, int> resolve_sequence(const std::string& token);

struct RunManifest {
  std::string spec_hash;
  std::string version;
  double wall_seconds = 0;
  std::vector<std::string> outputs;
  std::map<std::string, double> tolerances;
  std::string manifest_path;
};

// Dispatches the spec to its pipeline; writes CSV outputs plus manifest.json
// under out_dir. CSV bytes depend only on spec + seed.
RunManifest run(const ExperimentSpec& spec, const std::string& out_dir);

// Ranked comparison of sequences sharing a model and observable: sorts by
// N_op (ties by area under the stroboscopic curve) and flags B-crossovers.
struct SequenceRank {
  std::string sequence;
  double b_tesla = 0;
  NopResult nop;
  double area = 0;
};
struct ComparisonReport {
  std::vector<SequenceRank> ranking;  // best first, per B
  std::vector<double> crossover_fields;
  std::string csv_path;
};
ComparisonReport compare_sequences(const ExperimentSpec& spec,
                                   const std::string& out_dir);

// Echo curves from the bath ground vs first-excited state; reports the
// maximum pointwise |dL| and its ratio to the decay amplitude.
struct InitialStateReport {
  double max_abs_dl = 0;
  double max_decay = 0;  // max of 1 - L over the ground-state curve
  std::string ground_csv;
  std::string excited_csv;
};
InitialStateReport initial_state_check(const ExperimentSpec& spec,
                                       const std::string& out_dir);

// Deterministic CSV helpers shared by the pipelines and tests.
std::string format_double(double v);
std::string csv_header();  // t, L, sigma_z, concurrence, trace_distance, norm_drift

}  // namespace ddsim
