#include "ddsim/free_fermion.hpp"

#include <cmath>
#include <complex>

#include "ddsim/errors.hpp"

namespace ddsim::free_fermion {

namespace {
using cxd = std::complex<double>;
const cxd kI(0, 1);

Eigen::MatrixXcd expm_i(const Eigen::MatrixXd& h, double t) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  Eigen::VectorXcd phases(h.rows());
  for (long k = 0; k < h.rows(); ++k)
    phases[k] = std::exp(kI * t * es.eigenvalues()[k]);
  return es.eigenvectors().cast<cxd>() * phases.asDiagonal() *
         es.eigenvectors().transpose().cast<cxd>();
}

}  // namespace

QuadraticHamiltonian single_particle_matrices(int length, double j, double epsilon,
                                              int site) {
  if (length < 2) throw ValidationError("chain length must be at least 2");
  if (site < 0 || site >= length)
    throw ValidationError("qubit site outside the chain");
  Eigen::MatrixXd hop = Eigen::MatrixXd::Zero(length, length);
  for (int n = 0; n + 1 < length; ++n)
    hop(n, n + 1) = hop(n + 1, n) = 0.5 * j;
  QuadraticHamiltonian h{hop, hop};
  h.h_plus(site, site) += epsilon;
  h.h_minus(site, site) -= epsilon;
  return h;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& h_ref) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h_ref);
  const long n = h_ref.rows();
  for (long k = 0; k < n; ++k)
    if (std::abs(es.eigenvalues()[k]) < 1e-12)
      throw ValidationError(
          "zero mode at the Fermi level (odd chain length?); use an even "
          "length so the filled sea is unambiguous");
  std::vector<long> occ;
  for (long k = 0; k < n; ++k)
    if (es.eigenvalues()[k] < 0) occ.push_back(k);
  Eigen::MatrixXd v(n, static_cast<long>(occ.size()));
  for (std::size_t c = 0; c < occ.size(); ++c)
    v.col(static_cast<long>(c)) = es.eigenvectors().col(occ[c]);
  return v * v.transpose();
}

Eigen::MatrixXd correlation_matrix(const QuadraticHamiltonian& h, Reference ref) {
  if (ref == Reference::MinusChain) return correlation_matrix(h.h_minus);
  // epsilon-free chain: strip the on-site shifts by averaging
  Eigen::MatrixXd hop = 0.5 * (h.h_plus + h.h_minus);
  return correlation_matrix(hop);
}

double loschmidt_det(const Eigen::MatrixXd& r, const QuadraticHamiltonian& h,
                     double t) {
  if (t < 0) throw ValidationError("time must be non-negative");
  const long n = r.rows();
  Eigen::MatrixXcd u = expm_i(h.h_minus, t) * expm_i(h.h_plus, -t);
  Eigen::MatrixXcd m =
      Eigen::MatrixXcd::Identity(n, n) + r.cast<cxd>() * (u - Eigen::MatrixXcd::Identity(n, n));
  cxd det = Eigen::PartialPivLU<Eigen::MatrixXcd>(m).determinant();
  return std::norm(det);
}

double short_time_alpha(double epsilon) { return epsilon * epsilon; }

double fit_alpha(const std::vector<double>& times, const std::vector<double>& echoes) {
  if (times.size() != echoes.size() || times.size() < 2)
    throw ValidationError("alpha fit needs matching time/echo samples");
  // least squares for -ln L = alpha t^2 through the origin
  double num = 0, den = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    double t2 = times[i] * times[i];
    if (t2 == 0) continue;
    num += t2 * (-std::log(std::max(echoes[i], 1e-300)));
    den += t2 * t2;
  }
  if (den == 0) throw ValidationError("alpha fit needs nonzero times");
  return num / den;
}

}  // namespace ddsim::free_fermion
