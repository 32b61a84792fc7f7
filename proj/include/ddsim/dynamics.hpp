#pragma once

// Time evolution of the joint qubit(+)chain state under the static model
// Hamiltonian plus ideal or finite-width pulse schedules, reduced densities
// and observables, the periodic stroboscopic scheme, and direct
// suppression-order measurements on evolution operators.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ddsim/sequence.hpp"
#include "ddsim/spin_model.hpp"

namespace ddsim {

struct QuantumState {
  Eigen::VectorXcd amplitudes;
  double time = 0;  // J t

  double norm_drift() const { return std::abs(amplitudes.norm() - 1.0); }
};

using ReducedDensity = Eigen::MatrixXcd;  // 2x2 or 4x4, Hermitian, trace 1

enum class PulseMode { FiniteWidth, Ideal };
enum class ComputingInsertion { None, ConstantField, MidCycle, AfterCycle };

struct Schedule {
  DDSequence seq;
  PulseMode mode = PulseMode::Ideal;
  ComputingInsertion computing_insertion = ComputingInsertion::None;
  double computing_angle = 0;  // radians, rotation about x
  int n_cycles = 1;

  void validate() const;
};

enum class EngineKind { Auto, Dense, Trotter };

struct EngineOptions {
  EngineKind kind = EngineKind::Auto;
  double dt = 0.005;                  // Trotter micro-step target (J dt)
  std::size_t dense_dim_cap = 4096;   // largest dimension for exact segments
};

// Initial-state building blocks (qubit part in the low bits, bit q = qubit q).
Eigen::VectorXcd qubit_plus_x();
Eigen::VectorXcd qubit_up();
Eigen::VectorXcd bell_phi_plus();
Eigen::VectorXcd two_qubit_up_up();
Eigen::VectorXcd compose_initial(const HilbertSpace& space,
                                 const Eigen::VectorXcd& qubit_part,
                                 const Eigen::VectorXcd& bath_state);

// Second-order symmetric Trotter split over the term list, `steps` steps of
// size dt. Aborts with a diagnostic if the norm drifts beyond 1e-6.
QuantumState trotter_evolve(const QuantumState& state, const HilbertSpace& space,
                            const TermList& terms, double dt, int steps);

// Evolves under the schedule and returns states at the requested times
// (samples at a pulse instant are taken after the pulse).
std::vector<QuantumState> evolve_sequence(const QuantumState& initial,
                                          const Schedule& schedule,
                                          const ModelConfig& model,
                                          const std::vector<double>& sample_times,
                                          const EngineOptions& engine = {});

// Stroboscopic series: reduced density of all qubits at t* = 0, T, ..., nT,
// each sampled after that cycle's parity (and computing) events complete.
std::vector<ReducedDensity> run_periodic(const QuantumState& initial,
                                         const Schedule& schedule,
                                         const ModelConfig& model,
                                         const EngineOptions& engine = {});

// Partial trace onto the listed qubits (over the chain and any other qubit).
ReducedDensity reduced_density(const QuantumState& state, const HilbertSpace& space,
                               const std::vector<int>& qubits);

// |rho_+-|^2 normalized so L(0) = 1 for the initial |+x> state.
double loschmidt_echo(const ReducedDensity& rho);
double magnetization(const ReducedDensity& rho);
// Wootters concurrence of a two-qubit density matrix.
double concurrence(const ReducedDensity& rho);
// Trace norm of the difference, Tr sqrt((a-b)^dag (a-b)).
double trace_distance(const ReducedDensity& a, const ReducedDensity& b);

struct NopResult {
  bool reached = false;
  int n_cycles = 0;      // first n with obs(nT) <= obs(0)/2
  double n_interp = 0;   // linear interpolation between cycles
};
// First half-crossing of a stroboscopic observable series (index = cycle).
NopResult n_op(const std::vector<double>& observable_series);

struct SlopeResult {
  double slope = 0;
  std::vector<double> t_grid;
  std::vector<double> delta;  // qubit-coupled defect of exp(+i H_bath T) U0(T)
};
// Log-log slope of the toggled-frame propagator defect over a T grid
// (dense, ideal pulses; expect slope m+1 for an order-m sequence). The
// defect is taken against the nearest qubit-trivial operator, so bath-only
// Magnus content (which cannot decohere the qubit) does not mask the order.
SlopeResult suppression_slope(const DDSequence& seq, const ModelConfig& model,
                              const std::vector<double>& t_grid,
                              bool frobenius_norm = false);

std::vector<double> log_grid(double lo, double hi, int n);
std::vector<double> linear_grid(double lo, double hi, int n);

}  // namespace ddsim
