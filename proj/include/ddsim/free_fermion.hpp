#pragma once

// Jordan-Wigner oracle for Ising-coupled free decay at delta = 0: the XX
// chain maps to free fermions with hopping J/2; the qubit conditions the
// chain on +-epsilon S^z at its site, so the single-particle matrices carry
// an on-site shift of +-epsilon. The Loschmidt echo follows from an L x L
// determinant, independent of the many-body engine.

#include <Eigen/Dense>

namespace ddsim::free_fermion {

struct QuadraticHamiltonian {
  Eigen::MatrixXd h_plus;   // qubit spin up
  Eigen::MatrixXd h_minus;  // qubit spin down
};

// Which ground state defines the correlation matrix.
enum class Reference {
  FreeChain,   // epsilon-free hopping chain (default; reproduces alpha = eps^2)
  MinusChain,  // ground state of h_minus
};

// Open-chain hopping matrices (J/2 on the off-diagonals) with on-site
// +-epsilon at the qubit site.
QuadraticHamiltonian single_particle_matrices(int length, double j, double epsilon,
                                              int site);

// r_ij = <c_i^dag c_j> in the filled sea of negative-energy modes. Requires
// a gapped Fermi level: an exact zero mode (odd-length hopping chain) is
// rejected.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& h_ref);
Eigen::MatrixXd correlation_matrix(const QuadraticHamiltonian& h,
                                   Reference ref = Reference::FreeChain);

// L(t) = |det[1 + r (e^{i t H^-} e^{-i t H^+} - 1)]|^2.
double loschmidt_det(const Eigen::MatrixXd& r, const QuadraticHamiltonian& h,
                     double t);

// Short-time coefficient of L(t) = exp(-alpha t^2).
double short_time_alpha(double epsilon);

// Least-squares fit of -ln L = alpha t^2 over the given samples.
double fit_alpha(const std::vector<double>& times, const std::vector<double>& echoes);

}  // namespace ddsim::free_fermion
