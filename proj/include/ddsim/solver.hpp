#pragma once

// Moment-constraint systems for minimum-pulse sequence design and the
// damped-Newton multi-start solver over interval fractions.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ddsim/sequence.hpp"

namespace ddsim {

// Square polynomial system in the N+1 interval fractions of a fixed pulse
// pattern: normalization, the zeroth moments (m>=1), first moments (m>=2),
// and second plus cross-axis mixed moments (m=3).
struct ConstraintSystem {
  int order_m;
  std::vector<PulseAxis> pattern;
  std::array<std::vector<int>, 3> signs;  // per axis, per interval
  bool include_equal_axis_mixed = false;  // only for higher-spin qubits

  ConstraintSystem(int order, std::vector<PulseAxis> axes,
                   bool equal_axis_mixed = false);

  int unknown_count() const { return static_cast<int>(pattern.size()) + 1; }
  int equation_count() const;

  Eigen::VectorXd residuals(const Eigen::VectorXd& alpha) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& alpha) const;
};

struct SolverOptions {
  int n_starts = 200;
  std::uint64_t seed = 20260810;
  int max_iterations = 200;
  double residual_tol = 1e-12;   // infinity norm at acceptance
  double dedup_tol = 1e-6;       // L-infinity distance between solutions
  double min_alpha = 1e-6;       // positivity threshold for accepted roots
  bool include_uniform_start = true;
  int n_threads = 0;             // 0 = hardware concurrency
};

struct NewtonOutcome {
  bool converged = false;
  Eigen::VectorXd alpha;
  double residual_inf = 0;
  int iterations = 0;
};

// One damped Newton run (analytic Jacobian, backtracking line search).
NewtonOutcome newton_solve(const ConstraintSystem& sys, Eigen::VectorXd alpha0,
                           int max_iterations = 200, double tol = 1e-13);

// Refines published decimal intervals onto the exact nearby root.
std::vector<double> polish_intervals(int order_m, const std::vector<PulseAxis>& axes,
                                     const std::vector<double>& alphas);

// Multi-start solve over the interval simplex. Returns all distinct positive
// solutions with residuals below tolerance, sorted lexicographically.
// An infeasible pattern yields an empty list.
std::vector<DDSequence> solve_intervals(int order_m,
                                        const std::vector<PulseAxis>& pattern,
                                        const SolverOptions& opts = {});

// Full-pattern census for m in {1,2}: enumerates all direction patterns of
// the required length whose first pulse is x (cyclic axis relabelings are
// equivalent), solves each, and reports every distinct solution found.
struct CensusEntry {
  std::vector<PulseAxis> pattern;
  DDSequence sequence;
};
std::vector<CensusEntry> solution_census(int order_m, const SolverOptions& opts = {});

}  // namespace ddsim
