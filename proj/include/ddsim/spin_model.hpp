#pragma once

// Joint qubit(+)chain Hilbert space, Hamiltonian term lists, sparse/dense
// assembly, bath ground states and the field-to-pulse-width relation.
//
// Site numbering: qubits first (0 .. n_q-1), then chain sites. Site s owns
// bit s of the amplitude index; bit value 0 is spin up.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <complex>
#include <string>
#include <vector>

#include "ddsim/sequence.hpp"

namespace ddsim {

using cxd = std::complex<double>;
using SparseOp = Eigen::SparseMatrix<cxd>;

enum class Coupling { IsingZ, Heisenberg };

struct ModelConfig {
  int chain_length = 8;
  double J = 1.0;              // energy unit; times are reported as J*t
  double delta = 0.0;          // XXZ anisotropy, |delta| < 1
  Coupling coupling = Coupling::Heisenberg;
  double epsilon = -0.3;       // qubit-bath coupling in units of J
  std::vector<int> qubit_sites = {4};
  int exact_cap = 20;          // largest chain length for exact evolution

  void validate() const;
  int n_qubits() const { return static_cast<int>(qubit_sites.size()); }
};

struct HilbertSpace {
  int n_qubits = 0;
  int chain_length = 0;

  int n_sites() const { return n_qubits + chain_length; }
  std::size_t dim() const { return std::size_t{1} << n_sites(); }
  int qubit_site(int q) const { return q; }
  int chain_site(int i) const { return n_qubits + i; }
};

HilbertSpace joint_space(const ModelConfig& cfg);

// One k-local Hamiltonian term: a dense 2^k x 2^k matrix acting on `sites`
// (k is 1 or 2). For two sites the local basis index is 2*bit(sites[0]) +
// bit(sites[1]).
struct Term {
  std::vector<int> sites;
  Eigen::MatrixXcd op;
};
using TermList = std::vector<Term>;

// Pauli and spin-1/2 matrices.
Eigen::Matrix2cd pauli(PulseAxis axis);
Eigen::Matrix2cd spin_half(PulseAxis axis);  // sigma/2

// XXZ chain bonds J (SxSx + SySy + delta SzSz) with open boundary.
// `site_offset` shifts chain site numbering (0 for a chain-only space,
// n_qubits for the joint space).
TermList bath_terms(const ModelConfig& cfg, int site_offset);

// Qubit-bath coupling. IsingZ couples the qubit Pauli sigma_z to the chain
// spin S^z (the convention that reproduces the free-fermion echo and the
// short-time coefficient alpha = epsilon^2); Heisenberg couples s = sigma/2
// to the chain spin on each axis.
TermList interaction_terms(const ModelConfig& cfg);
// Same coupling split by axis so toggling frames can scale each part by
// f_mu = +-1. IsingZ has empty x and y parts.
std::array<TermList, 3> interaction_terms_by_axis(const ModelConfig& cfg);

// Control field A s.n on one qubit; a pi rotation needs A tau_p = pi.
TermList control_terms(PulseAxis axis, int qubit, double amplitude);

// Assembly and matrix-free application.
SparseOp to_sparse(const HilbertSpace& space, const TermList& terms);
Eigen::MatrixXcd to_dense(const HilbertSpace& space, const TermList& terms);
void apply_terms(const HilbertSpace& space, const TermList& terms,
                 const Eigen::VectorXcd& in, Eigen::VectorXcd& out);

double hermiticity_defect(const SparseOp& op);

// Spec-facing builders on the joint space (sparse Hermitian operators).
SparseOp build_bath(const ModelConfig& cfg);
SparseOp build_interaction(const ModelConfig& cfg);
SparseOp build_control(const ModelConfig& cfg, PulseAxis axis, int qubit,
                       double amplitude);

struct BathEigenpair {
  double energy = 0;
  Eigen::VectorXcd state;  // chain-only space
};

// Lowest n_states eigenpairs of the chain-only XXZ Hamiltonian via Lanczos
// with full reorthogonalization and deterministic restarts.
std::vector<BathEigenpair> ground_state(const ModelConfig& cfg, int n_states = 1);

// J tau_p = 10 pi J(meV) / B(Tesla).
double pulse_width_from_field(double j_mev, double b_tesla);

// Flat key-value model config format: L, delta, coupling, epsilon,
// qubit_sites, boundary. Reports errors as "<name>:<line>: message".
ModelConfig parse_model_config(const std::string& text, const std::string& name);

}  // namespace ddsim
