#pragma once

// Pulse-sequence algebra: sign histories in the toggling frame, moment and
// mixed-moment functionals, order verification, UDD/QDD generators and the
// catalog of published minimum-pulse sequences.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace ddsim {

enum class PulseAxis { X, Y, Z, Identity };

char axis_char(PulseAxis a);
PulseAxis axis_from_char(char c);

// Parses a direction string like "xzxzxz" into interior pulse axes.
std::vector<PulseAxis> parse_axes(const std::string& s);
std::string axes_string(const std::vector<PulseAxis>& axes);

// Cyclic relabeling x->y->z->x applied `shift` times (Identity fixed).
PulseAxis cycle_axis(PulseAxis a, int shift);

// Axis of the net Pauli product sigma_{a_N} ... sigma_{a_1} up to phase;
// Identity when the product is proportional to the identity.
PulseAxis parity_pulse(const std::vector<PulseAxis>& interior_axes);

// A decoupling cycle: N interior pi pulses separated (center to center) by
// fractions alpha_i of the period, closed by a parity pulse at T.
struct DDSequence {
  std::vector<PulseAxis> interior_axes;  // length N, each in {X,Y,Z}
  std::vector<double> intervals;         // length N+1, positive, sum 1
  PulseAxis parity_axis = PulseAxis::Identity;
  double period_T = 1.0;        // units of 1/J
  double pulse_width_tau_p = 0; // units of 1/J; 0 means ideal pulses

  // Builds a sequence, computing the parity pulse and checking invariants.
  static DDSequence make(std::vector<PulseAxis> axes, std::vector<double> alphas,
                         double T = 1.0, double tau_p = 0.0);

  void validate() const;

  int n_interior() const { return static_cast<int>(interior_axes.size()); }
  double min_alpha() const;
  // Minimum period permitted by the non-overlap condition T > tau_p/alpha_i.
  double t_c(double tau_p) const { return tau_p / min_alpha(); }
  // Interior pulse centers t_k = (sum_{i<=k} alpha_i) * T.
  std::vector<double> pulse_centers() const;

  DDSequence with_period(double T) const;
  DDSequence with_pulse_width(double tau_p) const;
  DDSequence relabeled(int cyclic_shift) const;

  bool operator==(const DDSequence&) const = default;
};

// Piecewise-constant toggling-frame signs f_x, f_y, f_z over [0, T].
struct SignHistory {
  std::vector<double> boundaries;        // s_0 = 0 < ... < s_K = T
  std::array<std::vector<int>, 3> signs; // per axis (x,y,z), per interval

  int n_intervals() const { return static_cast<int>(signs[0].size()); }
  double total_time() const { return boundaries.back(); }
  // f_mu(t); intervals are half-open [s_j, s_{j+1}).
  int sign_at(int axis, double t) const;
};

// Per-interval signs determined by the pulse pattern alone: start at
// (+,+,+), each pulse along mu negates the other two axes.
std::array<std::vector<int>, 3> interval_signs(const std::vector<PulseAxis>& pattern);

SignHistory sign_history(const DDSequence& seq);

// k-th moment of f_mu: integral of t^k f_mu(t) dt over [0, T], closed form.
double moment(const SignHistory& h, int axis, int k);

// Cross-axis mixed moment
//   integral_0^T dt1 integral_0^t1 dt2 (t1 - t2) [f_mu(t1) f_nu(t2) + f_mu(t2) f_nu(t1)],
// evaluated in closed form. Rejects mu == nu (no contribution for spin-1/2).
double mixed_moment(const SignHistory& h, int mu, int nu);

// Same functional without the mu != nu restriction; the equal-axis case is
// only meaningful for hypothetical higher-spin qubits.
double mixed_moment_any(const SignHistory& h, int mu, int nu);

// Largest m in {0,1,2,3} such that all constraints up to order m hold within
// tol_scale * T^(k+1) for the k-th moments (mixed moments scale like T^3).
int verify_order(const DDSequence& seq, double tol_scale = 1e-8);

// Uhrig sequence: N pulses along `axis` centered at t_k = T sin^2(k pi / (2N+2)).
DDSequence udd_sequence(int N, double T, PulseAxis axis);

// Quadratic DD: outer UDD-N of z pulses; inner UDD-N of x pulses rescaled to
// each of the N+1 outer intervals; (N+1)^2 intervals total.
DDSequence qdd_sequence(int N, double T);

// Published minimum-pulse sequences. Names:
//   m1_xz, m2_xzxzxz, m2_app1_xzxxzx, m2_app2_xzxxyx, m2_app3_xzxzyz,
//   m2_app4_xzxyzy, m3_xz
// Decimal-quoted entries are refined to the exact nearby constraint solution
// at load time so that every returned sequence satisfies its nominal order
// to solver precision and sums to 1 within 1e-12.
DDSequence catalog_sequence(const std::string& name);
std::vector<std::string> catalog_names();
int catalog_order(const std::string& name);

// Flat text exchange format: fields order, axes, alphas (12 significant
// digits), parity; one sequence per file.
std::string sequence_to_text(const DDSequence& seq, int order);
std::pair<DDSequence, int> sequence_from_text(const std::string& text);
void write_sequence_file(const std::string& path, const DDSequence& seq, int order);
std::pair<DDSequence, int> read_sequence_file(const std::string& path);

}  // namespace ddsim
