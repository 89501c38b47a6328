#include "support.hpp"

#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

using namespace sepdyn;
using namespace testing_support;

namespace {

const SystemShape Q2{2, 2};

Mat local_op(const Mat& a, const Mat& b) { return kron(a, b); }

}  // namespace

TEST(LindbladRhs, Examples) {
  std::mt19937_64 g(1);
  const Mat rho = random_density(4, g);
  EXPECT_EQ(max_abs(lindblad_rhs(rho, LindbladModel(Q2, Mat::Zero(4, 4), {}))), 0.0);
  const double gamma = 0.8;
  const Mat V = swap_matrix(2);
  EXPECT_LT(max_abs(lindblad_rhs(rho, swap_model(gamma)) - (gamma * V * rho * V - gamma * rho)), 1e-14);
  EXPECT_LT(max_abs(lindblad_rhs(Mat::Identity(4, 4) / 4.0, swap_model(gamma))), 1e-15);
  // trace preservation and hermiticity for a random model
  const auto m = random_model(4, 3, g);
  const Mat d = lindblad_rhs(rho, m);
  EXPECT_LT(std::abs(d.trace()), 1e-12);
  EXPECT_LT(hermiticity_defect(d), 1e-12);
}

TEST(Integrate, SwapClosedForm) {
  const Mat rho0 = projector(ket("01", Q2));
  const auto ds = integrate(swap_model(1.0), rho0, 1.0, 1e-3);
  const Mat want = swap_analytic_full(1.0, 1.0, rho0);
  EXPECT_LT(max_abs(ds.rho.back() - want), 1e-5);
  EXPECT_NEAR(std::real(want(1, 1)), std::exp(-1.0) * std::cosh(1.0), 1e-15);
  EXPECT_NEAR(std::real(want(1, 1)), 0.567667, 1e-6);
  EXPECT_NEAR(std::real(want(2, 2)), 0.432332, 1e-6);
}

TEST(Integrate, UnitaryMatchesExponential) {
  std::mt19937_64 g(2);
  const Mat H = random_hermitian(4, g);
  const Mat rho0 = random_density(4, g);
  const auto ds = integrate(LindbladModel(Q2, H, {}), rho0, 1.0, 1e-3);
  const Mat U = (Mat(-I * H)).exp();
  EXPECT_LT(max_abs(ds.rho.back() - U * rho0 * U.adjoint()), 1e-6);
}

TEST(Integrate, CnotSteadyState) {
  const double r = 1.0 / std::sqrt(2.0);
  Vec plus(2);
  plus << r, r;
  const Mat rho0 = projector(kron(plus, basis_vector(2, 0)));
  const auto ds = integrate(cnot_model(), rho0, 20.0, 0.01);
  const Mat want = cnot_steady_state(rho0);
  EXPECT_LT(max_abs(ds.rho.back() - want), 1e-8);
  EXPECT_NEAR(overlap(want, bell_state("Psi+")), 0.625, 1e-14);
}

TEST(Integrate, PositivityDiagnostic) {
  EXPECT_THROW(integrate(swap_model(1.0), projector(ket("01", Q2)), 2.0, 1.5, Method::euler), std::runtime_error);
}

TEST(SepGenerator, SingleParty) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_model(3, 2, g);
    const ProductState p(m.shape, {random_vector(3, g).normalized()});
    const Vec v = p.full();
    const auto gen = sep_generator(p, m);
    EXPECT_LT(max_abs(gen.drift - lindblad_rhs(v * v.adjoint(), m)), 1e-10);
  }
}

TEST(SepGenerator, SeparableModelsAgree) {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_local_model(SystemShape{2, 3}, 3, g);
    const auto p = random_product(m.shape, g);
    const Vec v = p.full();
    EXPECT_LT(max_abs(sep_generator(p, m).drift - lindblad_rhs(v * v.adjoint(), m)), 1e-10);
  }
}

TEST(SepGenerator, ClosedSystemIsLocalVonNeumann) {
  std::mt19937_64 g(5);
  const Mat H = random_hermitian(4, g);  // interacting
  const LindbladModel m(Q2, H, {});
  const auto p = random_product(Q2, g);
  const auto gen = sep_generator(p, m);
  for (int j = 0; j < 2; ++j) {
    const Mat hj = partially_reduce(H, p, j);
    const Mat pj = projector(p[j]);
    // partial trace of the drift onto party j
    Mat red = Mat::Zero(2, 2);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int o = 0; o < 2; ++o) {
          const int ia = j == 0 ? 2 * a + o : 2 * o + a;
          const int ib = j == 0 ? 2 * b + o : 2 * o + b;
          red(a, b) += gen.drift(ia, ib);
        }
    EXPECT_LT(max_abs(I * red - (hj * pj - pj * hj)), 1e-12);
  }
}

TEST(SepGenerator, SwapFormula) {
  std::mt19937_64 g(6);
  const double gamma = 1.0;
  const Vec a = random_vector(2, g).normalized(), b = random_vector(2, g).normalized();
  const ProductState p(Q2, {a, b});
  const Vec v = p.full();
  const Mat rho = v * v.adjoint();
  const double mv = std::norm(a.dot(b));
  const Mat M = kron(projector(b), projector(a));
  const Mat want = gamma / (mv * mv) * M * rho * M - gamma * rho;
  EXPECT_LT(max_abs(sep_generator(p, swap_model(gamma)).unnormalized - want), 1e-12);
}

TEST(SepDecompose, SwapOneStep) {
  std::mt19937_64 g(7);
  const double gamma = 1.0, tau = 0.01;
  const Vec a = random_vector(2, g).normalized(), b = random_vector(2, g).normalized();
  const auto e = sep_decompose(ProductState(Q2, {a, b}), swap_model(gamma), tau);
  const Mat want = (1 - gamma * tau) * projector(kron(a, b)) + gamma * tau * projector(kron(b, a));
  EXPECT_LT(max_abs(ensemble_density(e) - want), 1e-12);
  double w = 0.0;
  for (const auto& m : e) w += m.weight;
  EXPECT_NEAR(w, 1.0, 1e-12);
  EXPECT_THROW(sep_decompose(ProductState(Q2, {a, b}), swap_model(gamma), 2.0), std::runtime_error);
}

TEST(SepPiecewise, SwapBinomialAndMembersSeparable) {
  const double tau = 0.01;
  const ProductState start = product_from_label("01", Q2);
  PiecewiseOptions po;
  const auto frames = sep_piecewise_propagate({{1.0, start}}, swap_model(1.0), 1.0, tau, po);
  for (std::size_t s = 0; s < frames.size(); s += 10) {
    const Mat want = swap_analytic_restricted(static_cast<int>(s), tau, 1.0, basis_vector(2, 0), basis_vector(2, 1));
    EXPECT_LT(max_abs(frames[s].rho - want), 1e-12);
    double w = 0.0;
    for (const auto& m : frames[s].members) {
      w += m.weight;
      EXPECT_LT(negativity(projector(m.state.full()), 0, Q2), 1e-10);
    }
    EXPECT_NEAR(w, 1.0, 1e-12);
  }
}

TEST(SepPiecewise, SeparableMapMatchesLinearIntegrator) {
  std::mt19937_64 g(8);
  const auto m = random_local_model(Q2, 2, g);
  const auto p = random_product(Q2, g);
  const Mat ref = integrate(m, projector(p.full()), 0.5, 1e-3).rho.back();
  double prev = 0.0;
  for (double tau : {0.02, 0.01}) {
    PiecewiseOptions po;
    po.keep_members = false;
    const auto fr = sep_piecewise_propagate({{1.0, p}}, m, 0.5, tau, po);
    const double d = trace_distance(fr.back().rho, ref);
    EXPECT_LT(d, 5.0 * tau);
    if (prev > 0.0) EXPECT_LT(d, prev);
    prev = d;
  }
}

TEST(Stochastic, PoissonDiscipline) {
  Rng rng(1, 0);
  const auto m = bell_decay_model();
  Vec psi = ket("11", Q2);
  for (int i = 0; i < 200; ++i) {
    JumpIncrement inc;
    psi = sse_step(psi, m, 0.01, rng, &inc);
    int total = 0;
    for (int a = 0; a < m.channels(); ++a) {
      total += inc.dN(a);
      for (int b = 0; b < m.channels(); ++b) EXPECT_EQ(inc.dN(a) * inc.dN(b), a == b ? inc.dN(b) : 0);
    }
    EXPECT_LE(total, 1);
  }
  EXPECT_THROW(sse_step(ket("11", Q2), m, 0.2, rng), std::runtime_error);
}

TEST(Stochastic, EmpiricalJumpRate) {
  const auto m = bell_decay_model();
  const double dt = 1e-3;
  const int N = 10000;
  Rng rng(2, 0);
  int hits = 0;
  for (int i = 0; i < N; ++i) {
    JumpIncrement inc;
    sse_step(ket("11", Q2), m, dt, rng, &inc);
    hits += inc.dN(0);
  }
  const double p = 9.0 * dt;
  EXPECT_LT(std::abs(hits - N * p), 3.0 * std::sqrt(N * p * (1 - p)));
}

TEST(Stochastic, ClosedSystemSteps) {
  std::mt19937_64 g(9);
  const Mat H = random_hermitian(4, g);
  const LindbladModel m(Q2, H, {});
  const Vec psi = random_vector(4, g).normalized();
  Rng r(1, 0);
  const Vec out = sse_step(psi, m, 0.01, r);
  EXPECT_LT((out - (psi - 0.01 * I * H * psi).normalized()).norm(), 1e-14);
  Rng r2(1, 0);
  const Mat s = svn_step(projector(psi), m, 0.01, r2);
  EXPECT_LT(max_abs(s - projector(out)), 1e-14);
  // dark state: drift only
  Rng r3(3, 0);
  JumpIncrement inc;
  const Vec dark = sse_step(ket("00", Q2), bell_decay_model(), 0.01, r3, &inc);
  EXPECT_EQ(inc.channel, -1);
  EXPECT_LT((dark - ket("00", Q2)).norm(), 1e-14);
}

TEST(Stochastic, SvnAgreesWithSseUnderSharedSeed) {
  const auto m = swap_model(1.0);
  const double r = 1.0 / std::sqrt(2.0);
  Vec psi(4);
  psi << 0.1, r, 0.3, 0.2;
  psi.normalize();
  Mat sigma = projector(psi);
  Rng a(4, 0), b(4, 0);
  for (int i = 0; i < 100; ++i) {
    psi = sse_step(psi, m, 0.01, a);
    sigma = svn_step(sigma, m, 0.01, b);
    EXPECT_LT(trace_distance(projector(psi), sigma), 1e-10);
  }
}

TEST(Stochastic, SepLayerAgreements) {
  // one party: sep_sse_step is sse_step
  std::mt19937_64 g(10);
  const auto m1 = random_model(3, 2, g);
  Vec v = random_vector(3, g).normalized();
  ProductState p(m1.shape, {v});
  Rng a(5, 0), b(5, 0);
  for (int i = 0; i < 50; ++i) {
    v = sse_step(v, m1, 0.01, a);
    p = sep_sse_step(p, m1, 0.01, b);
    EXPECT_LT(trace_distance(projector(v), projector(p.full())), 1e-10);
  }
  // swap: sep_svn_step follows sep_sse_step; a jump exchanges the factors
  const auto ms = swap_model(1.0);
  ProductState q(Q2, {random_vector(2, g).normalized(), random_vector(2, g).normalized()});
  Mat sigma = projector(q.full());
  Rng c(6, 0), d(6, 0);
  bool jumped = false;
  for (int i = 0; i < 100; ++i) {
    const ProductState before = q;
    JumpIncrement inc;
    q = sep_sse_step(q, ms, 0.01, c, &inc);
    sigma = sep_svn_step(sigma, ms, 0.01, d);
    EXPECT_LT(trace_distance(projector(q.full()), sigma), 1e-10);
    if (inc.channel == 0) {
      jumped = true;
      EXPECT_NEAR(std::norm(q[0].dot(before[1])), 1.0, 1e-10);
      EXPECT_NEAR(std::norm(q[1].dot(before[0])), 1.0, 1e-10);
    }
  }
  EXPECT_TRUE(jumped);
}

TEST(Stochastic, SepSseTracksSseForSeparableMaps) {
  std::mt19937_64 g(11);
  const auto m = random_local_model(Q2, 2, g);
  const auto p0 = random_product(Q2, g);
  for (double dt : {2e-3, 1e-3}) {
    Vec v = p0.full();
    ProductState p = p0;
    Rng a(7, 0), b(7, 0);
    const int steps = static_cast<int>(0.2 / dt);
    double worst = 0.0;
    for (int i = 0; i < steps; ++i) {
      v = sse_step(v, m, dt, a);
      p = sep_sse_step(p, m, dt, b);
      worst = std::max(worst, trace_distance(projector(v), projector(p.full())));
    }
    EXPECT_LT(worst, 5.0 * dt);
  }
}

TEST(Stochastic, PurityAndErrors) {
  Rng rng(8, 0);
  Mat sigma = projector(ket("11", Q2));
  const auto m = bell_decay_model();
  for (int i = 0; i < 200; ++i) {
    sigma = svn_step(sigma, m, 0.01, rng);
    EXPECT_NEAR(std::real((sigma * sigma).trace()), 1.0, 1e-10);
  }
  EXPECT_THROW(svn_step(Mat::Identity(4, 4) / 4.0, m, 0.01, rng), std::invalid_argument);
  EXPECT_THROW(sep_svn_step(projector(bell_state("Phi+")), m, 0.01, rng), std::invalid_argument);
}

TEST(Scenarios, DecayModels) {
  const auto b = bell_decay_model();
  EXPECT_LT(max_abs(b.L[0] - 3.0 * outer(bell_state("Phi+"), ket("11", Q2))), 1e-15);
  const Vec chain = b.L[1] * b.L[0] * ket("11", Q2);
  EXPECT_LT((chain - 3.0 * ket("00", Q2)).norm(), 1e-14);
  const auto zero = bell_decay_model({0, 0, 0, 0});
  EXPECT_EQ(zero.channels(), 0);

  std::mt19937_64 g(12);
  const auto base = product_decay_model({5, 1, 5, 9});
  const auto rot = rotated_variant(base);
  for (int i = 0; i < 20; ++i) {
    const Mat rho = random_density(4, g);
    EXPECT_LT(max_abs(lindblad_rhs(rho, base) - lindblad_rhs(rho, rot)), 1e-12);
  }
  EXPECT_THROW(rotated_variant(product_decay_model()), std::invalid_argument);
}

TEST(Scenarios, SeparabilityCheck) {
  EXPECT_TRUE(check_separable_form(product_decay_model()).manifestly_separable);
  EXPECT_FALSE(check_separable_form(rotated_variant(product_decay_model({5, 1, 5, 9}))).manifestly_separable);
  EXPECT_FALSE(check_separable_form(swap_model(1.0)).manifestly_separable);
  Mat z(2, 2);
  z << 1, 0, 0, -1;
  const LindbladModel deph(Q2, Mat::Zero(4, 4), {local_op(z, Mat::Identity(2, 2))});
  EXPECT_TRUE(check_separable_form(deph).manifestly_separable);
  EXPECT_FALSE(check_separable_form(bell_decay_model()).manifestly_separable);
}

TEST(Scenarios, SwapOracles) {
  const Mat rho0 = projector(ket("01", Q2));
  EXPECT_LT(max_abs(swap_analytic_full(0.0, 1.0, rho0) - rho0), 1e-15);
  const auto [e, o] = swap_restricted_weights(1000, 1e-3, 1.0);
  EXPECT_NEAR(e, std::exp(-1.0) * std::cosh(1.0), 2e-3);
  EXPECT_NEAR(o, std::exp(-1.0) * std::sinh(1.0), 2e-3);
  const auto [e1, o1] = swap_restricted_weights(1, 0.01, 1.0);
  EXPECT_NEAR(e1, 0.99, 1e-15);
  EXPECT_NEAR(o1, 0.01, 1e-15);
}

TEST(Scenarios, Catalogue) {
  for (const auto& n : scenario_names()) {
    const auto sc = make_scenario(n);
    EXPECT_EQ(sc.name, n);
    EXPECT_FALSE(sc.observables.empty());
    EXPECT_EQ(sc.initial.shape, sc.model.shape);
  }
  EXPECT_THROW(make_scenario("nope"), std::invalid_argument);
  const auto c = make_scenario("cnot");
  EXPECT_EQ(c.n_traj, 400);
  EXPECT_DOUBLE_EQ(c.dt, 0.2);
}

TEST(Scenarios, DecayPopulationsSumToOne) {
  for (const char* n : {"bell-decay", "product-decay", "product-decay-rotated"}) {
    const auto sc = make_scenario(n);
    const auto es = run_ensemble(sc.model, sc.initial.full(), 3.0, 0.2, 40, 1, {1, 20, false, 0, sc.observables});
    for (std::size_t t = 0; t < es.times.size(); ++t)
      EXPECT_NEAR(es.obs_mean[t][0] + es.obs_mean[t][1] + es.obs_mean[t][2], 1.0, 1e-8);
  }
}
