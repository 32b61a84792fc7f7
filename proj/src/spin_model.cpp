#include "ddsim/spin_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ddsim/errors.hpp"

namespace ddsim {

namespace {
constexpr double kPi = 3.14159265358979323846;
const cxd kI(0, 1);
}  // namespace

void ModelConfig::validate() const {
  if (chain_length < 2) throw ValidationError("chain_length must be at least 2");
  if (chain_length > exact_cap)
    throw ValidationError("chain_length " + std::to_string(chain_length) +
                          " exceeds the exact-evolution cap " +
                          std::to_string(exact_cap));
  if (!(J > 0)) throw ValidationError("J must be positive");
  if (!(std::abs(delta) < 1.0))
    throw ValidationError("|delta| must be < 1 (XY regime)");
  if (qubit_sites.empty() || qubit_sites.size() > 2)
    throw ValidationError("need 1 or 2 qubit sites");
  for (int s : qubit_sites)
    if (s < 0 || s >= chain_length)
      throw ValidationError("qubit site " + std::to_string(s) +
                            " outside [0, L-1]");
  if (qubit_sites.size() == 2 && qubit_sites[0] == qubit_sites[1])
    throw ValidationError("qubit sites must be distinct");
}

HilbertSpace joint_space(const ModelConfig& cfg) {
  cfg.validate();
  return HilbertSpace{cfg.n_qubits(), cfg.chain_length};
}

Eigen::Matrix2cd pauli(PulseAxis axis) {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
  switch (axis) {
    case PulseAxis::X: m << 0, 1, 1, 0; break;
    case PulseAxis::Y: m << 0, -kI, kI, 0; break;
    case PulseAxis::Z: m << 1, 0, 0, -1; break;
    case PulseAxis::Identity: m.setIdentity(); break;
  }
  return m;
}

Eigen::Matrix2cd spin_half(PulseAxis axis) { return 0.5 * pauli(axis); }

namespace {

Eigen::Matrix4cd two_site(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Eigen::Matrix4cd m;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      m.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return m;
}

}  // namespace

TermList bath_terms(const ModelConfig& cfg, int site_offset) {
  cfg.validate();
  const auto sx = spin_half(PulseAxis::X);
  const auto sy = spin_half(PulseAxis::Y);
  const auto sz = spin_half(PulseAxis::Z);
  Eigen::Matrix4cd bond = cfg.J * (two_site(sx, sx) + two_site(sy, sy) +
                                   cfg.delta * two_site(sz, sz));
  TermList terms;
  for (int n = 0; n + 1 < cfg.chain_length; ++n)
    terms.push_back({{site_offset + n, site_offset + n + 1}, bond});
  return terms;
}

std::array<TermList, 3> interaction_terms_by_axis(const ModelConfig& cfg) {
  cfg.validate();
  HilbertSpace space = joint_space(cfg);
  std::array<TermList, 3> parts;
  const PulseAxis axes[3] = {PulseAxis::X, PulseAxis::Y, PulseAxis::Z};
  for (int q = 0; q < cfg.n_qubits(); ++q) {
    int chain = space.chain_site(cfg.qubit_sites[q]);
    int qubit = space.qubit_site(q);
    if (cfg.coupling == Coupling::IsingZ) {
      // epsilon * sigma_z S^z: the qubit enters through the Pauli so that
      // the conditional chain potentials are +-epsilon S^z, matching the
      // free-fermion echo and alpha = epsilon^2.
      parts[2].push_back({{qubit, chain},
                          cfg.epsilon * two_site(pauli(PulseAxis::Z),
                                                 spin_half(PulseAxis::Z))});
    } else {
      for (int mu = 0; mu < 3; ++mu)
        parts[mu].push_back({{qubit, chain},
                             cfg.epsilon * two_site(spin_half(axes[mu]),
                                                    spin_half(axes[mu]))});
    }
  }
  return parts;
}

TermList interaction_terms(const ModelConfig& cfg) {
  TermList all;
  for (auto& part : interaction_terms_by_axis(cfg))
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

TermList control_terms(PulseAxis axis, int qubit, double amplitude) {
  if (axis == PulseAxis::Identity) return {};
  return {{{qubit}, amplitude * Eigen::MatrixXcd(spin_half(axis))}};
}

namespace {

// Enumerates the action of a k-local term on every basis state.
template <typename Sink>
void for_each_entry(const HilbertSpace& space, const Term& term, Sink&& sink) {
  const std::size_t dim = space.dim();
  if (term.sites.size() == 1) {
    int s = term.sites[0];
    std::size_t mask = std::size_t{1} << s;
    for (std::size_t col = 0; col < dim; ++col) {
      int b = (col & mask) ? 1 : 0;
      for (int r = 0; r < 2; ++r) {
        cxd v = term.op(r, b);
        if (v == cxd(0)) continue;
        std::size_t row = (col & ~mask) | (std::size_t(r) << s);
        sink(row, col, v);
      }
    }
  } else {
    int s0 = term.sites[0], s1 = term.sites[1];
    std::size_t m0 = std::size_t{1} << s0, m1 = std::size_t{1} << s1;
    for (std::size_t col = 0; col < dim; ++col) {
      int b = 2 * ((col & m0) ? 1 : 0) + ((col & m1) ? 1 : 0);
      for (int r = 0; r < 4; ++r) {
        cxd v = term.op(r, b);
        if (v == cxd(0)) continue;
        std::size_t row = (col & ~(m0 | m1)) | (std::size_t(r >> 1) << s0) |
                          (std::size_t(r & 1) << s1);
        sink(row, col, v);
      }
    }
  }
}

}  // namespace

SparseOp to_sparse(const HilbertSpace& space, const TermList& terms) {
  std::vector<Eigen::Triplet<cxd>> trips;
  for (const auto& term : terms)
    for_each_entry(space, term, [&](std::size_t r, std::size_t c, cxd v) {
      trips.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    });
  SparseOp op(static_cast<long>(space.dim()), static_cast<long>(space.dim()));
  op.setFromTriplets(trips.begin(), trips.end());
  op.makeCompressed();
  return op;
}

Eigen::MatrixXcd to_dense(const HilbertSpace& space, const TermList& terms) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<long>(space.dim()),
                                              static_cast<long>(space.dim()));
  for (const auto& term : terms)
    for_each_entry(space, term, [&](std::size_t r, std::size_t c, cxd v) {
      m(static_cast<long>(r), static_cast<long>(c)) += v;
    });
  return m;
}

void apply_terms(const HilbertSpace& space, const TermList& terms,
                 const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
  out.setZero(in.size());
  for (const auto& term : terms)
    for_each_entry(space, term, [&](std::size_t r, std::size_t c, cxd v) {
      out[static_cast<long>(r)] += v * in[static_cast<long>(c)];
    });
}

double hermiticity_defect(const SparseOp& op) {
  SparseOp diff = SparseOp(op.adjoint()) - op;
  double m = 0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SparseOp::InnerIterator it(diff, k); it; ++it)
      m = std::max(m, std::abs(it.value()));
  return m;
}

SparseOp build_bath(const ModelConfig& cfg) {
  return to_sparse(joint_space(cfg), bath_terms(cfg, cfg.n_qubits()));
}

SparseOp build_interaction(const ModelConfig& cfg) {
  return to_sparse(joint_space(cfg), interaction_terms(cfg));
}

SparseOp build_control(const ModelConfig& cfg, PulseAxis axis, int qubit,
                       double amplitude) {
  if (qubit < 0 || qubit >= cfg.n_qubits())
    throw ValidationError("control qubit index out of range");
  return to_sparse(joint_space(cfg), control_terms(axis, qubit, amplitude));
}

namespace {

// Lanczos with full reorthogonalization, deterministic start, and locking
// restarts for the lowest eigenpairs.
struct LanczosResult {
  std::vector<double> values;
  std::vector<Eigen::VectorXcd> vectors;
};

LanczosResult lanczos_lowest(const HilbertSpace& space, const TermList& terms,
                             int n_states, double tol) {
  const long dim = static_cast<long>(space.dim());
  const int max_basis = std::min<long>(dim, 220);
  const int max_restarts = 60;

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXcd v0(dim);
  for (long i = 0; i < dim; ++i) v0[i] = cxd(gauss(rng), gauss(rng));
  v0.normalize();

  std::vector<Eigen::VectorXcd> locked;
  std::vector<double> locked_vals;
  Eigen::VectorXcd work(dim);

  auto orthogonalize = [&](Eigen::VectorXcd& v,
                           const std::vector<Eigen::VectorXcd>& basis) {
    for (int rep = 0; rep < 2; ++rep)
      for (const auto& b : basis) v -= b.dot(v) * b;
    for (int rep = 0; rep < 2; ++rep)
      for (const auto& b : locked) v -= b.dot(v) * b;
  };

  Eigen::VectorXcd start = v0;
  for (int restart = 0; restart < max_restarts; ++restart) {
    std::vector<Eigen::VectorXcd> basis;
    std::vector<double> a, b;
    orthogonalize(start, basis);
    if (start.norm() < 1e-12) {
      for (long i = 0; i < dim; ++i) start[i] = cxd(gauss(rng), gauss(rng));
      orthogonalize(start, basis);
    }
    start.normalize();
    basis.push_back(start);
    for (int j = 0; j < max_basis; ++j) {
      apply_terms(space, terms, basis[j], work);
      double aj = basis[j].dot(work).real();
      a.push_back(aj);
      work -= aj * basis[j];
      if (j > 0) work -= b[j - 1] * basis[j - 1];
      orthogonalize(work, basis);
      double bj = work.norm();
      if (bj < 1e-13 || j + 1 == max_basis) break;
      b.push_back(bj);
      basis.push_back(work / bj);
    }
    const int m = static_cast<int>(basis.size());
    Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) tri(i, i) = a[i];
    for (int i = 0; i + 1 < m; ++i) tri(i, i + 1) = tri(i + 1, i) = b[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);

    int want = n_states - static_cast<int>(locked.size());
    bool progressed = false;
    for (int k = 0; k < std::min(want, m); ++k) {
      Eigen::VectorXcd ritz = Eigen::VectorXcd::Zero(dim);
      for (int i = 0; i < m; ++i) ritz += es.eigenvectors()(i, k) * basis[i];
      ritz.normalize();
      apply_terms(space, terms, ritz, work);
      double energy = ritz.dot(work).real();
      double resid = (work - energy * ritz).norm();
      if (resid < tol) {
        locked.push_back(ritz);
        locked_vals.push_back(energy);
        progressed = true;
      } else {
        start = ritz;  // restart from the best unconverged Ritz vector
        break;
      }
    }
    if (static_cast<int>(locked.size()) >= n_states) break;
    if (!progressed && restart + 1 == max_restarts)
      throw NumericalError("Lanczos failed to converge the requested eigenpairs");
  }
  if (static_cast<int>(locked.size()) < n_states)
    throw NumericalError("Lanczos failed to converge the requested eigenpairs");

  // sort by energy
  std::vector<int> order(locked.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return locked_vals[i] < locked_vals[j]; });
  LanczosResult res;
  for (int i : order) {
    res.values.push_back(locked_vals[i]);
    res.vectors.push_back(locked[i]);
  }
  return res;
}

}  // namespace

std::vector<BathEigenpair> ground_state(const ModelConfig& cfg, int n_states) {
  cfg.validate();
  if (n_states < 1) throw ValidationError("n_states must be >= 1");
  HilbertSpace chain_only{0, cfg.chain_length};
  TermList terms = bath_terms(cfg, 0);
  LanczosResult res = lanczos_lowest(chain_only, terms, n_states, 1e-10);
  std::vector<BathEigenpair> out;
  for (std::size_t i = 0; i < res.values.size(); ++i)
    out.push_back({res.values[i], std::move(res.vectors[i])});
  return out;
}

double pulse_width_from_field(double j_mev, double b_tesla) {
  if (!(b_tesla > 0)) throw ValidationError("magnetic field must be positive");
  return 10.0 * kPi * j_mev / b_tesla;
}

namespace {

std::vector<std::pair<int, std::string>> config_lines(const std::string& text) {
  std::vector<std::pair<int, std::string>> lines;
  std::istringstream is(text);
  std::string line;
  int ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
    if (!blank) lines.emplace_back(ln, line);
  }
  return lines;
}

}  // namespace

ModelConfig parse_model_config(const std::string& text, const std::string& name) {
  ModelConfig cfg;
  cfg.qubit_sites.clear();
  bool have_sites = false;
  auto fail = [&](int ln, const std::string& msg) {
    throw ValidationError(name + ":" + std::to_string(ln) + ": " + msg);
  };
  for (auto& [ln, line] : config_lines(text)) {
    std::string body = line;
    std::replace(body.begin(), body.end(), '=', ' ');
    std::istringstream ls(body);
    std::string key, value;
    ls >> key;
    std::getline(ls, value);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t\r") + 1);
    if (value.empty()) fail(ln, "missing value for '" + key + "'");
    try {
      if (key == "L") cfg.chain_length = std::stoi(value);
      else if (key == "J") cfg.J = std::stod(value);
      else if (key == "delta") cfg.delta = std::stod(value);
      else if (key == "epsilon") cfg.epsilon = std::stod(value);
      else if (key == "coupling") {
        if (value == "ising" || value == "ising_z") cfg.coupling = Coupling::IsingZ;
        else if (value == "heisenberg") cfg.coupling = Coupling::Heisenberg;
        else fail(ln, "coupling must be 'ising' or 'heisenberg', got '" + value + "'");
      } else if (key == "qubit_sites") {
        std::string v = value;
        std::replace(v.begin(), v.end(), ',', ' ');
        std::istringstream vs(v);
        int site;
        while (vs >> site) cfg.qubit_sites.push_back(site);
        if (cfg.qubit_sites.empty()) fail(ln, "qubit_sites needs at least one index");
        have_sites = true;
      } else if (key == "boundary") {
        if (value != "open") fail(ln, "only open boundary conditions are supported");
      } else {
        fail(ln, "unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      fail(ln, "cannot parse value '" + value + "' for '" + key + "'");
    } catch (const std::out_of_range&) {
      fail(ln, "value out of range for '" + key + "'");
    }
  }
  if (!have_sites) cfg.qubit_sites = {cfg.chain_length / 2};
  cfg.validate();
  return cfg;
}

}  // namespace ddsim
