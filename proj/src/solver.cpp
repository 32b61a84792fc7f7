#include "ddsim/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "ddsim/errors.hpp"

namespace ddsim {

namespace {

int required_pulses(int order_m) {
  switch (order_m) {
    case 1: return 3;   // 4 intervals
    case 2: return 6;   // 7 intervals
    case 3: return 12;  // 13 intervals
  }
  throw ValidationError("constraint order must be 1, 2 or 3");
}

constexpr int kMixedPairs[3][2] = {{0, 1}, {1, 2}, {2, 0}};

}  // namespace

ConstraintSystem::ConstraintSystem(int order, std::vector<PulseAxis> axes,
                                   bool equal_axis_mixed)
    : order_m(order), pattern(std::move(axes)), include_equal_axis_mixed(equal_axis_mixed) {
  int need = required_pulses(order);
  if (static_cast<int>(pattern.size()) != need)
    throw ValidationError("order " + std::to_string(order) + " needs " +
                          std::to_string(need) + " interior pulses, got " +
                          std::to_string(pattern.size()));
  signs = interval_signs(pattern);
  if (include_equal_axis_mixed && order_m != 3)
    throw ValidationError("equal-axis mixed moments apply only at order 3");
}

int ConstraintSystem::equation_count() const {
  int n = 1 + 3;                      // normalization + zeroth moments
  if (order_m >= 2) n += 3;           // first moments
  if (order_m >= 3) n += 3 + 3;       // second moments + cross mixed moments
  if (include_equal_axis_mixed) n += 3;
  return n;
}

Eigen::VectorXd ConstraintSystem::residuals(const Eigen::VectorXd& alpha) const {
  const int K = unknown_count();
  Eigen::VectorXd s(K + 1);
  s[0] = 0;
  for (int i = 0; i < K; ++i) s[i + 1] = s[i] + alpha[i];

  Eigen::VectorXd r(equation_count());
  int e = 0;
  r[e++] = s[K] - 1.0;

  auto put_moments = [&](int k) {
    for (int mu = 0; mu < 3; ++mu) {
      double acc = 0;
      for (int j = 0; j < K; ++j)
        acc += signs[mu][j] *
               (std::pow(s[j + 1], k + 1) - std::pow(s[j], k + 1)) / (k + 1);
      r[e++] = acc;
    }
  };
  put_moments(0);
  if (order_m >= 2) put_moments(1);
  if (order_m >= 3) {
    put_moments(2);
    auto mixed = [&](int mu, int nu) {
      double acc = 0;
      for (int j = 0; j < K; ++j) {
        double d = s[j + 1] - s[j];
        acc += (2.0 * signs[mu][j] * signs[nu][j]) * d * d * d / 6.0;
      }
      for (int j = 1; j < K; ++j) {
        double dj = s[j + 1] - s[j];
        double cj = 0.5 * (s[j] + s[j + 1]);
        for (int i = 0; i < j; ++i) {
          double di = s[i + 1] - s[i];
          double ci = 0.5 * (s[i] + s[i + 1]);
          acc += (signs[mu][j] * signs[nu][i] + signs[mu][i] * signs[nu][j]) *
                 (cj - ci) * dj * di;
        }
      }
      return acc;
    };
    for (auto& p : kMixedPairs) r[e++] = mixed(p[0], p[1]);
    if (include_equal_axis_mixed)
      for (int mu = 0; mu < 3; ++mu) r[e++] = mixed(mu, mu);
  }
  return r;
}

Eigen::MatrixXd ConstraintSystem::jacobian(const Eigen::VectorXd& alpha) const {
  const int K = unknown_count();
  Eigen::VectorXd s(K + 1);
  s[0] = 0;
  for (int i = 0; i < K; ++i) s[i + 1] = s[i] + alpha[i];

  // d r / d s_b for movable boundaries b = 1..K, then chain rule through
  // s_b = sum_{i<=b} alpha_i (suffix sums over b).
  Eigen::MatrixXd Js = Eigen::MatrixXd::Zero(equation_count(), K);
  int e = 0;
  for (int b = 1; b <= K; ++b) Js(e, b - 1) = (b == K) ? 1.0 : 0.0;
  ++e;

  auto put_moments = [&](int k) {
    for (int mu = 0; mu < 3; ++mu) {
      for (int b = 1; b <= K; ++b) {
        double sb_k = std::pow(s[b], k);
        double d = (b < K) ? (signs[mu][b - 1] - signs[mu][b]) * sb_k
                           : signs[mu][K - 1] * sb_k;
        Js(e, b - 1) = d;
      }
      ++e;
    }
  };
  put_moments(0);
  if (order_m >= 2) put_moments(1);
  if (order_m >= 3) {
    put_moments(2);
    auto mixed_row = [&](int mu, int nu) {
      for (int b = 1; b <= K; ++b) {
        double d = 0;
        // triangle terms: d/ds_b of s_mu s_nu (s_{j+1}-s_j)^3 / 3
        for (int j = 0; j < K; ++j) {
          double dj = s[j + 1] - s[j];
          double coeff = signs[mu][j] * signs[nu][j] * dj * dj;
          if (b == j + 1) d += coeff;
          if (b == j) d -= coeff;
        }
        // rectangle terms
        for (int j = 1; j < K; ++j) {
          double dj = s[j + 1] - s[j];
          double cj = 0.5 * (s[j] + s[j + 1]);
          for (int i = 0; i < j; ++i) {
            double di = s[i + 1] - s[i];
            double ci = 0.5 * (s[i] + s[i + 1]);
            double g = signs[mu][j] * signs[nu][i] + signs[mu][i] * signs[nu][j];
            double dcj = (b == j || b == j + 1) ? 0.5 : 0.0;
            double dci = (b == i || b == i + 1) ? 0.5 : 0.0;
            double ddj = (b == j + 1 ? 1.0 : 0.0) - (b == j ? 1.0 : 0.0);
            double ddi = (b == i + 1 ? 1.0 : 0.0) - (b == i ? 1.0 : 0.0);
            d += g * ((dcj - dci) * dj * di + (cj - ci) * (ddj * di + dj * ddi));
          }
        }
        Js(e, b - 1) = d;
      }
      ++e;
    };
    for (auto& p : kMixedPairs) mixed_row(p[0], p[1]);
    if (include_equal_axis_mixed)
      for (int mu = 0; mu < 3; ++mu) mixed_row(mu, mu);
  }

  // suffix-sum chain rule: dr/dalpha_i = sum_{b >= i} dr/ds_b
  Eigen::MatrixXd J(Js.rows(), K);
  for (int eq = 0; eq < Js.rows(); ++eq) {
    double acc = 0;
    for (int b = K; b >= 1; --b) {
      acc += Js(eq, b - 1);
      J(eq, b - 1) = acc;
    }
  }
  return J;
}

NewtonOutcome newton_solve(const ConstraintSystem& sys, Eigen::VectorXd alpha,
                           int max_iterations, double tol) {
  NewtonOutcome out;
  Eigen::VectorXd r = sys.residuals(alpha);
  double f = r.squaredNorm();
  for (int it = 0; it < max_iterations; ++it) {
    if (r.lpNorm<Eigen::Infinity>() < tol) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    Eigen::MatrixXd J = sys.jacobian(alpha);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    if (qr.rank() < J.cols()) break;  // singular Jacobian, abandon this start
    Eigen::VectorXd step = qr.solve(-r);
    double lambda = 1.0;
    bool advanced = false;
    while (lambda > 1e-6) {
      Eigen::VectorXd cand = alpha + lambda * step;
      Eigen::VectorXd rc = sys.residuals(cand);
      double fc = rc.squaredNorm();
      if (fc < (1.0 - 1e-4 * lambda) * f || fc < tol * tol) {
        alpha = std::move(cand);
        r = std::move(rc);
        f = fc;
        advanced = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!advanced) break;  // stalled line search
    out.iterations = it + 1;
  }
  if (!out.converged && r.lpNorm<Eigen::Infinity>() < tol) out.converged = true;
  out.alpha = std::move(alpha);
  out.residual_inf = r.lpNorm<Eigen::Infinity>();
  return out;
}

std::vector<double> polish_intervals(int order_m, const std::vector<PulseAxis>& axes,
                                     const std::vector<double>& alphas) {
  ConstraintSystem sys(order_m, axes);
  Eigen::VectorXd a0 = Eigen::Map<const Eigen::VectorXd>(alphas.data(),
                                                         static_cast<long>(alphas.size()));
  NewtonOutcome out = newton_solve(sys, a0, 100, 1e-14);
  if (!out.converged || out.alpha.minCoeff() <= 0)
    throw NumericalError("interval refinement failed to converge");
  // pin the normalization exactly
  out.alpha[out.alpha.size() - 1] += 1.0 - out.alpha.sum();
  return {out.alpha.data(), out.alpha.data() + out.alpha.size()};
}

std::vector<DDSequence> solve_intervals(int order_m,
                                        const std::vector<PulseAxis>& pattern,
                                        const SolverOptions& opts) {
  ConstraintSystem sys(order_m, pattern);
  const int K = sys.unknown_count();

  // Start vectors: uniform-random positive vectors normalized onto the
  // simplex, pre-generated serially so threading cannot change the result.
  std::vector<Eigen::VectorXd> starts;
  if (opts.include_uniform_start)
    starts.push_back(Eigen::VectorXd::Constant(K, 1.0 / K));
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < opts.n_starts; ++i) {
    Eigen::VectorXd v(K);
    double sum = 0;
    for (int j = 0; j < K; ++j) {
      v[j] = uni(rng) + 1e-12;
      sum += v[j];
    }
    starts.push_back(v / sum);
  }

  std::vector<NewtonOutcome> outcomes(starts.size());
  unsigned hw = std::thread::hardware_concurrency();
  int n_threads = opts.n_threads > 0 ? opts.n_threads : static_cast<int>(hw ? hw : 1);
  n_threads = std::min<int>(n_threads, static_cast<int>(starts.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= starts.size()) return;
      outcomes[i] = newton_solve(sys, starts[i], opts.max_iterations, 1e-13);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<Eigen::VectorXd> roots;
  for (auto& o : outcomes) {
    if (!o.converged) continue;
    if (o.residual_inf > opts.residual_tol) continue;
    if (o.alpha.minCoeff() < opts.min_alpha) continue;
    roots.push_back(o.alpha);
  }
  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(),
                                        b.data(), b.data() + b.size());
  });
  std::vector<DDSequence> sequences;
  for (auto& root : roots) {
    bool dup = false;
    for (auto& seq : sequences) {
      double d = 0;
      for (int i = 0; i < K; ++i)
        d = std::max(d, std::abs(seq.intervals[i] - root[i]));
      if (d < opts.dedup_tol) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    Eigen::VectorXd a = root;
    a[K - 1] += 1.0 - a.sum();
    sequences.push_back(DDSequence::make(
        pattern, std::vector<double>(a.data(), a.data() + K)));
  }
  return sequences;
}

std::vector<CensusEntry> solution_census(int order_m, const SolverOptions& opts) {
  if (order_m != 1 && order_m != 2)
    throw ValidationError("solution census enumerates patterns only for m in {1,2}");
  const int N = (order_m == 1) ? 3 : 6;
  std::vector<CensusEntry> census;
  // First pulse fixed to x: any pattern can be rotated there by a cyclic
  // axis relabeling, which maps solutions to solutions.
  const PulseAxis axes3[3] = {PulseAxis::X, PulseAxis::Y, PulseAxis::Z};
  std::vector<int> digits(N - 1, 0);
  long total = 1;
  for (int i = 0; i < N - 1; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<PulseAxis> pattern{PulseAxis::X};
    for (int i = 0; i < N - 1; ++i) {
      pattern.push_back(axes3[c % 3]);
      c /= 3;
    }
    for (auto& seq : solve_intervals(order_m, pattern, opts))
      census.push_back({pattern, std::move(seq)});
  }
  return census;
}

}  // namespace ddsim
