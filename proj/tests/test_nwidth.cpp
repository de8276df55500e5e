#include <cmath>
#include <vector>

#include "doctest.h"
#include "knw/nwidth.hpp"

using namespace knw;

namespace {

BasisMatrix exact_mode_basis(const TaskFamily& fam) {
  return BasisMatrix{mode_matrix(fam), fam.grid};
}

// Basis made of the first `keep` solution modes; the dropped modes are
// grid-orthogonal to it, which makes the worst-case error analytic.
BasisMatrix truncated_mode_basis(const TaskFamily& fam, std::size_t keep) {
  Matrix all = mode_matrix(fam);
  Matrix b(keep, all.cols);
  for (std::size_t k = 0; k < keep; ++k)
    for (std::size_t p = 0; p < all.cols; ++p) b(k, p) = all(k, p);
  return BasisMatrix{std::move(b), fam.grid};
}

}  // namespace

TEST_CASE("mode matrix rows are grid-orthogonal with known norms") {
  SUBCASE("1d sine modes") {
    TaskFamily fam = poisson_family(128);
    Matrix m = mode_matrix(fam);
    // On an inclusive n-point grid over [-1,1] the sampled sine modes have
    // squared norm (n-1)/2 and vanishing mutual products.
    const double want = (128.0 - 1.0) / 2.0;
    for (std::size_t k = 0; k < fam.n_modes; ++k)
      CHECK(dot(m.row(k), m.row(k)) == doctest::Approx(want).epsilon(1e-12));
    for (std::size_t k = 0; k < fam.n_modes; ++k)
      for (std::size_t j = k + 1; j < fam.n_modes; ++j)
        CHECK(std::abs(dot(m.row(k), m.row(j))) < 1e-9);
  }

  SUBCASE("2d product modes") {
    TaskFamily fam = allen_cahn_family(51, 5);
    Matrix m = mode_matrix(fam);
    // Per axis the squared norm is (51-1)/2 = 25, so 625 for the product.
    for (std::size_t k = 0; k < fam.n_modes; ++k)
      CHECK(dot(m.row(k), m.row(k)) == doctest::Approx(625.0).epsilon(1e-12));
    for (std::size_t k = 0; k < fam.n_modes; ++k)
      for (std::size_t j = k + 1; j < fam.n_modes; ++j)
        CHECK(std::abs(dot(m.row(k), m.row(j))) < 1e-9);
  }
}

TEST_CASE("coefficient box maps raw values into the box") {
  CoefficientBox box{0.0, 1.0, 3};
  DoubleCtx ctx;
  std::vector<double> raw{0.0, 30.0, -30.0};
  auto c = box.bound(std::span<const double>(raw), ctx);
  CHECK(c[0] == doctest::Approx(0.5));
  CHECK(c[1] == doctest::Approx(1.0));
  CHECK(c[2] < 1e-12);
  for (double v : c) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  CoefficientBox shifted{-2.0, 6.0, 1};
  std::vector<double> zero{0.0};
  CHECK(shifted.bound(std::span<const double>(zero), ctx)[0] ==
        doctest::Approx(2.0));

  std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(box.bound(std::span<const double>(wrong), ctx),
                  ContractViolation);
}

TEST_CASE("coefficient box is bitwise identical on tape and plain routes") {
  CoefficientBox box{0.0, 1.0, 4};
  std::vector<double> raw{-1.3, 0.2, 2.7, -0.05};
  DoubleCtx dctx;
  auto plain = box.bound(std::span<const double>(raw), dctx);

  Tape tape;
  std::vector<Value> raw_v;
  for (double r : raw) raw_v.push_back(tape.var(r));
  TapeCtx tctx{&tape};
  auto taped = box.bound(std::span<const Value>(raw_v), tctx);
  for (std::size_t i = 0; i < raw.size(); ++i)
    CHECK(tape.val(taped[i]) == plain[i]);
}

TEST_CASE("vertex oracle recovers the analytic error of a truncated basis") {
  SUBCASE("1d") {
    TaskFamily fam = poisson_family(128);
    BasisMatrix basis = truncated_mode_basis(fam, 4);
    VertexLsResult r = vertex_ls_oracle(basis, fam);
    // The basis reproduces modes 1..4 exactly; what remains of any target is
    // its fifth-mode component, largest at coefficient 1.
    CHECK(r.value == doctest::Approx(std::sqrt(63.5)).epsilon(1e-9));
    CHECK(r.c.size() == 5);
    CHECK(r.c[4] == 1.0);
  }

  SUBCASE("2d") {
    TaskFamily fam = allen_cahn_family(51, 5);
    BasisMatrix basis = truncated_mode_basis(fam, 4);
    VertexLsResult r = vertex_ls_oracle(basis, fam);
    CHECK(r.value == doctest::Approx(25.0).epsilon(1e-9));
    CHECK(r.c[4] == 1.0);
  }

  SUBCASE("exact basis leaves nothing behind") {
    TaskFamily fam = poisson_family(128);
    BasisMatrix basis = exact_mode_basis(fam);
    VertexLsResult r = vertex_ls_oracle(basis, fam);
    CHECK(r.value < 1e-9);
  }

  SUBCASE("duplicate rows fall back to the pseudo-inverse") {
    TaskFamily fam = poisson_family(128);
    fam.n_modes = 2;
    Matrix all = mode_matrix(fam);
    Matrix b(2, all.cols);
    for (std::size_t p = 0; p < all.cols; ++p) b(0, p) = b(1, p) = all(0, p);
    BasisMatrix basis{std::move(b), fam.grid};
    VertexLsResult r = vertex_ls_oracle(basis, fam);
    // Span is just the first mode, so the second mode's full norm remains.
    CHECK(r.value == doctest::Approx(std::sqrt(63.5)).epsilon(1e-9));
  }

  SUBCASE("refuses absurd enumerations") {
    TaskFamily fam = poisson_family(64);
    fam.n_modes = 30;
    BasisMatrix basis = exact_mode_basis(fam);
    CHECK_THROWS_AS(vertex_ls_oracle(basis, fam), ContractViolation);
  }
}

TEST_CASE("knw_value matches hand-computed normalisations") {
  TaskFamily fam = poisson_family(128);
  BasisMatrix basis = truncated_mode_basis(fam, 4);
  // Target with every coefficient at 1; by grid orthogonality its best
  // approximation in the truncated basis has weights (1,1,1,1) and the
  // residual is exactly the fifth mode.
  std::vector<double> c{1.0, 1.0, 1.0, 1.0, 1.0};
  std::vector<double> w2{1.0, 1.0, 1.0, 1.0};

  KnwConfig cfg;
  SUBCASE("absolute") {
    CHECK(knw_value(c, w2, basis, fam, cfg) ==
          doctest::Approx(std::sqrt(63.5)).epsilon(1e-9));
  }

  SUBCASE("relative divides by the target norm") {
    cfg.mode = KnwConfig::Mode::relative;
    // ||u(1,...,1)||^2 = 5 * 63.5 by orthogonality.
    CHECK(knw_value(c, w2, basis, fam, cfg) ==
          doctest::Approx(std::sqrt(63.5) / std::sqrt(5.0 * 63.5)).epsilon(1e-9));
  }

  SUBCASE("forcing normalisation divides by the forcing norm") {
    cfg.normalize_by_forcing = true;
    // f = sum_k (k pi)^2 c_k sin(k pi x), so by the same orthogonality
    // ||f||^2 = pi^4 * sum_k k^4 * 63.5 with sum_k k^4 = 979 for k = 1..5.
    const double f_norm = M_PI * M_PI * std::sqrt(979.0 * 63.5);
    CHECK(knw_value(c, w2, basis, fam, cfg) ==
          doctest::Approx(std::sqrt(63.5) / f_norm).epsilon(1e-9));
  }

  SUBCASE("contracts") {
    std::vector<double> short_c{1.0};
    CHECK_THROWS_AS(knw_value(short_c, w2, basis, fam, cfg),
                    ContractViolation);
    KnwConfig bad;
    bad.mode = KnwConfig::Mode::relative;
    bad.normalize_by_forcing = true;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("bi-optimisation agrees with the vertex oracle") {
  TaskFamily fam = poisson_family(128);
  BasisMatrix basis = truncated_mode_basis(fam, 4);
  VertexLsResult oracle = vertex_ls_oracle(basis, fam);

  KnwConfig cfg;
  cfg.epochs_bi = 2000;
  cfg.seed = 7;
  KnwResult r = compute_metric(basis, fam, cfg);

  CHECK(std::abs(r.value_abs - oracle.value) / oracle.value < 0.05);
  // The worst case pushes the missing mode's coefficient towards its bound;
  // the sigmoid never quite reaches it under a finite epoch budget.
  CHECK(r.c_star[4] > 0.97);
  CHECK(r.value_rel == doctest::Approx(r.value_abs / norm2(u_on_grid(
                           make_instance(fam, r.c_star), fam.grid))));
}

TEST_CASE("bi-optimisation on an exact basis finds almost nothing") {
  TaskFamily fam = poisson_family(128);
  BasisMatrix basis = exact_mode_basis(fam);

  KnwConfig cfg;
  cfg.epochs_bi = 1500;
  cfg.seed = 3;
  KnwResult r = compute_metric(basis, fam, cfg);
  CHECK(r.value_rel < 1e-3);
}

TEST_CASE("metric runs are deterministic and warm starts are honoured") {
  TaskFamily fam = poisson_family(64);
  fam.n_modes = 3;
  BasisMatrix basis = truncated_mode_basis(fam, 2);

  KnwConfig cfg;
  cfg.epochs_bi = 200;
  cfg.seed = 11;
  cfg.trace_every = 50;
  KnwResult a = compute_metric(basis, fam, cfg);
  KnwResult b = compute_metric(basis, fam, cfg);
  REQUIRE(a.c_star.size() == b.c_star.size());
  for (std::size_t i = 0; i < a.c_star.size(); ++i)
    CHECK(a.c_star[i] == b.c_star[i]);
  CHECK(a.value_abs == b.value_abs);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].value == b.trace[i].value);

  KnwInit warm{a.raw_star, a.w2_star};
  KnwResult c = compute_metric(basis, fam, cfg, &warm);
  // Resuming from a converged point should not lose ground.
  CHECK(c.value_abs > 0.95 * a.value_abs);

  KnwInit bad{{0.0}, a.w2_star};
  CHECK_THROWS_AS(compute_metric(basis, fam, cfg, &bad), ContractViolation);
}

TEST_CASE("first traced value equals the plain-route objective") {
  TaskFamily fam = poisson_family(64);
  BasisMatrix basis = truncated_mode_basis(fam, 3);

  KnwConfig cfg;
  cfg.epochs_bi = 1;
  cfg.seed = 5;
  cfg.trace_every = 1;
  KnwResult r = compute_metric(basis, fam, cfg);
  REQUIRE(!r.trace.empty());

  // Reproduce the seeded initial state by hand and evaluate without a tape.
  Rng rng = Rng::stream(cfg.seed, Stream::agent_init);
  std::vector<double> raw(fam.n_modes);
  for (auto& v : raw) v = 0.5 * rng.normal();
  DoubleCtx ctx;
  CoefficientBox box{fam.coeff_lo, fam.coeff_hi, fam.n_modes};
  auto c = box.bound(std::span<const double>(raw), ctx);
  std::vector<double> w2(basis.n_basis(), 0.0);
  CHECK(r.trace[0].value == knw_value(c, w2, basis, fam, cfg));
}

TEST_CASE("unit ball option keeps the worst case inside the ball") {
  TaskFamily fam = poisson_family(64);
  BasisMatrix basis = truncated_mode_basis(fam, 3);

  KnwConfig cfg;
  cfg.epochs_bi = 500;
  cfg.seed = 2;
  cfg.unit_ball = true;
  KnwResult r = compute_metric(basis, fam, cfg);
  CHECK(norm2(r.c_star) <= 1.0 + 1e-12);

  KnwConfig plain_cfg;
  CHECK(r.value_abs ==
        doctest::Approx(knw_value(r.c_star, r.w2_star, basis, fam, plain_cfg)));
}
