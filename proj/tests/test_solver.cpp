#include "ddsim/solver.hpp"

#include <cmath>
#include <random>

#include "ddsim/errors.hpp"
#include "doctest.h"

using namespace ddsim;

namespace {

Eigen::VectorXd random_simplex(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> uni(0.05, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = uni(rng);
  return v / v.sum();
}

}  // namespace

TEST_CASE("analytic Jacobian matches finite differences") {
  std::mt19937_64 rng(5);
  for (auto [order, pattern] : {std::pair{1, "xzx"}, {2, "xzxzyz"},
                                {3, "xzxzxzxzxzxz"}}) {
    ConstraintSystem sys(order, parse_axes(pattern));
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd a = random_simplex(rng, sys.unknown_count());
      Eigen::MatrixXd J = sys.jacobian(a);
      const double h = 1e-7;
      for (int i = 0; i < sys.unknown_count(); ++i) {
        Eigen::VectorXd ap = a, am = a;
        ap[i] += h;
        am[i] -= h;
        Eigen::VectorXd dr = (sys.residuals(ap) - sys.residuals(am)) / (2 * h);
        for (int e = 0; e < sys.equation_count(); ++e)
          CHECK(J(e, i) == doctest::Approx(dr[e]).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("system shapes") {
  CHECK(ConstraintSystem(1, parse_axes("xzx")).equation_count() == 4);
  CHECK(ConstraintSystem(2, parse_axes("xzxzxz")).equation_count() == 7);
  CHECK(ConstraintSystem(3, parse_axes("xzxzxzxzxzxz")).equation_count() == 13);
  CHECK_THROWS_AS(ConstraintSystem(2, parse_axes("xzx")), ValidationError);
  CHECK_THROWS_AS(ConstraintSystem(4, parse_axes("xzxz")), ValidationError);
}

TEST_CASE("m=1 pattern xzx has the unique equally spaced solution") {
  auto sols = solve_intervals(1, parse_axes("xzx"));
  REQUIRE(sols.size() == 1);
  for (double a : sols[0].intervals)
    CHECK(std::abs(a - 0.25) < 1e-12);
  CHECK(sols[0].parity_axis == PulseAxis::Z);
}

TEST_CASE("m=2 pattern xzxzxz reproduces the closed-form intervals") {
  auto sols = solve_intervals(2, parse_axes("xzxzxz"));
  REQUIRE(!sols.empty());
  const double r33 = std::sqrt(33.0);
  std::vector<double> expect = {(7 - r33) / 16, 0.125, (r33 - 3) / 16, 0.25,
                                (r33 - 3) / 16, 0.125, (7 - r33) / 16};
  bool found = false;
  for (const auto& s : sols) {
    double dev = 0;
    for (int i = 0; i < 7; ++i)
      dev = std::max(dev, std::abs(s.intervals[i] - expect[i]));
    found = found || dev < 1e-10;
    CHECK(verify_order(s) >= 2);
  }
  CHECK(found);
}

TEST_CASE("m=3 alternating pattern contains the published 13 intervals") {
  auto sols = solve_intervals(3, parse_axes("xzxzxzxzxzxz"));
  REQUIRE(!sols.empty());
  std::vector<double> pub = {0.0171, 0.0468, 0.0658, 0.1013, 0.1184, 0.1006,
                             0.1195, 0.1049, 0.0823, 0.1025, 0.0647, 0.0439,
                             0.0318};
  bool found = false;
  for (const auto& s : sols) {
    double dev = 0;
    for (int i = 0; i < 13; ++i)
      dev = std::max(dev, std::abs(s.intervals[i] - pub[i]));
    if (dev < 5e-4) found = true;
    CHECK(verify_order(s) == 3);
    double sum = 0;
    for (double a : s.intervals) sum += a;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  CHECK(found);
}

TEST_CASE("infeasible pattern returns empty, not an error") {
  auto sols = solve_intervals(2, parse_axes("xxxxxx"));
  CHECK(sols.empty());
}

TEST_CASE("solutions are deduplicated and sorted") {
  auto sols = solve_intervals(2, parse_axes("xzxzxz"));
  for (std::size_t i = 0; i + 1 < sols.size(); ++i) {
    double d = 0;
    for (int c = 0; c < 7; ++c)
      d = std::max(d, std::abs(sols[i].intervals[c] - sols[i + 1].intervals[c]));
    CHECK(d >= 1e-6);
    CHECK(sols[i].intervals < sols[i + 1].intervals);
  }
}

TEST_CASE("solver is deterministic for a fixed seed") {
  SolverOptions opts;
  opts.n_starts = 60;
  auto a = solve_intervals(2, parse_axes("xzxxyx"), opts);
  auto b = solve_intervals(2, parse_axes("xzxxyx"), opts);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].intervals == b[i].intervals);

  SolverOptions two_threads = opts;
  two_threads.n_threads = 2;
  auto c = solve_intervals(2, parse_axes("xzxxyx"), two_threads);
  REQUIRE(c.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(c[i].intervals == a[i].intervals);
}

TEST_CASE("relabeled solutions still satisfy the constraints") {
  auto sols = solve_intervals(2, parse_axes("xzxzxz"));
  REQUIRE(!sols.empty());
  for (int shift : {1, 2}) {
    auto rel = sols[0].relabeled(shift);
    CHECK(verify_order(rel) >= 2);
  }
}

TEST_CASE("polish rejects starts that are nowhere near a root") {
  // published m=2 appendix values polish onto an exact solution
  auto alphas = polish_intervals(
      2, parse_axes("xzxzyz"),
      {0.0785, 0.1396, 0.1596, 0.25, 0.1715, 0.0931, 0.1104});
  ConstraintSystem sys(2, parse_axes("xzxzyz"));
  Eigen::VectorXd a = Eigen::Map<Eigen::VectorXd>(alphas.data(), 7);
  CHECK(sys.residuals(a).lpNorm<Eigen::Infinity>() < 1e-12);
}
