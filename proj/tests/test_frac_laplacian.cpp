#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <fracdiff/frac_laplacian.hpp>

using namespace fracdiff;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

GridFunction random_grid(const Mesh& mesh, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(mesh.size());
  for (double& x : v) x = dist(rng);
  return GridFunction(mesh, std::move(v));
}

GridFunction sample(const Mesh& mesh, const std::function<double(double)>& f) {
  std::vector<double> v(mesh.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(mesh.node(i));
  return GridFunction(mesh, std::move(v));
}

}  // namespace

TEST(Mesh, CoveringAndWindow) {
  const Mesh m = Mesh::covering(-1.0, 1.0, 0.1);
  EXPECT_EQ(m.size(), 21u);
  EXPECT_DOUBLE_EQ(m.a(), -1.0);
  EXPECT_DOUBLE_EQ(m.b(), 1.0);
  const auto [lo, hi] = m.window(-0.5, 0.5);
  EXPECT_EQ(hi - lo, 11u);
  EXPECT_DOUBLE_EQ(m.node(lo), -0.5);
  EXPECT_THROW(Mesh(0.1, 0, 5), std::invalid_argument);
  EXPECT_THROW(Mesh::covering(1.0, 2.0, 0.1), std::invalid_argument);
}

TEST(GridFunction, RejectsNonFiniteAndSizeMismatch) {
  const Mesh m(1.0, -1, 3);
  EXPECT_THROW(GridFunction(m, {1.0, NAN, 0.0}), std::invalid_argument);
  EXPECT_THROW(GridFunction(m, {1.0}), std::invalid_argument);
}

TEST(GridFunction, CsvRoundTripIsExact) {
  std::mt19937_64 rng(3);
  const Mesh m(0.37, -4, 11);
  const auto u = random_grid(m, rng);
  std::stringstream buf;
  write_csv(u, buf);
  EXPECT_EQ(buf.str().substr(0, 8), "x,value\n");
  const auto back = read_csv(buf);
  EXPECT_EQ(back.mesh().first_index(), -4);
  EXPECT_EQ(back.values(), u.values());
}

TEST(KernelWeights, CentralWeightHalfOrder) {
  EXPECT_LT(rel(kernel_weights(0.5, 1.0, 3).w[0], 4.0 / std::numbers::pi), 1e-13);
}

// mpmath at 40 digits
TEST(KernelWeights, FrozenValues) {
  const auto k = kernel_weights(0.3, 0.5, 10);
  EXPECT_LT(rel(k.w[0], 1.681432589102795665), 1e-13);
  EXPECT_LT(rel(k.w[7], -0.01553434748346080309), 1e-13);
  EXPECT_LT(rel(kernel_weights(0.75, 0.1, 1000).w[1000], -2.992068739298370125e-7), 1e-12);
}

TEST(KernelWeights, RecurrenceMatchesLogGammaAndReflectedForms) {
  for (double s : {0.25, 0.5, 0.75})
    for (double h : {1.0, 0.1}) {
      const auto k = kernel_weights(s, h, 1000);
      for (long n = 1; n <= 1000; ++n) {
        SCOPED_TRACE(n);
        ASSERT_LT(rel(k.w[static_cast<std::size_t>(n)], kernel_weight_reflected(s, h, n)), 1e-12) << "s=" << s;
        if (n <= 50) {
          ASSERT_LT(rel(k.w[static_cast<std::size_t>(n)], kernel_weight_direct(s, h, n)), 1e-13);
        }
      }
      EXPECT_LT(rel(k.w[0], kernel_weight_reflected(s, h, 0)), 1e-13);
    }
}

TEST(KernelWeights, SignMonotonicityAndFarField) {
  for (double s : {0.1, 0.25, 0.5, 0.75, 0.9})
    for (double h : {1.0, 0.3}) {
      const auto k = kernel_weights(s, h, 10000);
      EXPECT_GT(k.w[0], 0.0);
      for (std::size_t n = 1; n <= 10000; ++n) {
        ASSERT_LT(k.w[n], 0.0);
        if (n > 1) {
          ASSERT_LT(std::abs(k.w[n]), std::abs(k.w[n - 1]));
        }
      }
      const double far = std::pow(h, 2.0 * s) * std::pow(1e4, 1.0 + 2.0 * s) * std::abs(k.w[10000]);
      EXPECT_LT(rel(far, fractional_laplacian_constant(s)), 0.01);
    }
}

TEST(KernelWeights, NearOneRecoversThreePointStencil) {
  const auto k = kernel_weights(0.999, 0.1, 4);
  EXPECT_NEAR(k.w[0] * 0.01, 2.0, 0.02);
  EXPECT_NEAR(k.w[1] * 0.01, -1.0, 0.01);
  EXPECT_LT(std::abs(k.w[2]) * 0.01, 1e-3);
}

TEST(KernelWeights, RowSumTailBound) {
  for (double s : {0.25, 0.5, 0.75}) {
    const auto k = kernel_weights(s, 1.0, 1 << 16);
    double partial = k.w[0];
    std::vector<double> ratios;
    for (std::size_t n = 1; n <= k.half_width(); ++n) {
      partial += 2.0 * k.w[n];
      if ((n & (n - 1)) == 0 && n >= 64) ratios.push_back(partial * std::pow(static_cast<double>(n), 2.0 * s));
    }
    EXPECT_GT(partial, 0.0);
    // the ratio to N^{-2s} settles
    EXPECT_LT(rel(ratios[ratios.size() - 1], ratios[ratios.size() - 2]), 1e-3) << "s=" << s;
  }
}

TEST(KernelWeights, RejectsBadParameters) {
  EXPECT_THROW(kernel_weights(0.0, 1.0, 3), std::invalid_argument);
  EXPECT_THROW(kernel_weights(1.0, 1.0, 3), std::invalid_argument);
  EXPECT_THROW(kernel_weights(0.5, 0.0, 3), std::invalid_argument);
}

TEST(Apply, DeltaGivesKernel) {
  const Mesh m(0.5, -20, 41);
  GridFunction u(m);
  u[20] = 1.0;
  const auto k = kernel_weights(0.4, 0.5, 40);
  const auto out = apply(k, u);
  for (std::size_t i = 0; i < m.size(); ++i)
    EXPECT_DOUBLE_EQ(out[i], k.w[static_cast<std::size_t>(std::abs(static_cast<long>(i) - 20))]);
}

TEST(Apply, FftMatchesDirectOnRandomInput) {
  std::mt19937_64 rng(11);
  for (std::size_t n : {5u, 64u, 257u, 600u, 1500u}) {
    const Mesh m(0.2, -static_cast<long>(n / 2), n);
    const auto k = kernel_weights(0.35, 0.2, n);
    for (int rep = 0; rep < 5; ++rep) {
      const auto u = random_grid(m, rng);
      const auto a = apply(k, u, ApplyMethod::direct);
      const auto b = apply(k, u, ApplyMethod::fft);
      double scale = 0.0, diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        scale = std::max(scale, std::abs(a[i]));
        diff = std::max(diff, std::abs(a[i] - b[i]));
      }
      EXPECT_LT(diff, 1e-12 * scale) << "n=" << n;
    }
  }
}

TEST(Apply, SelfAdjoint) {
  std::mt19937_64 rng(5);
  const Mesh m(0.1, -400, 900);
  const DiscreteFractionalLaplacian op(0.6, m);
  for (int rep = 0; rep < 5; ++rep) {
    const auto u = random_grid(m, rng), v = random_grid(m, rng);
    const auto Au = op.apply(u), Av = op.apply(v);
    double a = 0.0, b = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      a += Au[i] * v[i];
      b += u[i] * Av[i];
      scale += std::abs(Au[i] * v[i]);
    }
    EXPECT_LT(std::abs(a - b), 1e-12 * scale);
  }
}

TEST(Apply, PlaneWaveSymbol) {
  const Mesh m(1.0, -(1 << 16), (1u << 17) + 1);
  const std::size_t centre = 1u << 16;
  for (double s : {0.25, 0.5, 0.75})
    for (double w : {0.5, 1.0, 2.0}) {
      const auto u = sample(m, [w](double x) { return std::cos(w * x); });
      const auto out = DiscreteFractionalLaplacian(s, m).apply(u);
      const double symbol = std::pow(4.0 * std::pow(std::sin(w / 2.0), 2), s);
      for (long j = -5; j <= 5; ++j) {
        const auto i = static_cast<std::size_t>(static_cast<long>(centre) + j);
        EXPECT_NEAR(out[i], symbol * u[i], 1e-6) << "s=" << s << " w=" << w;
      }
    }
}

TEST(Apply, ConstantWindowNearlyAnnihilated) {
  // 1 on |x| <= W inside a much wider mesh: the centre value is the two clipped tails.
  for (double s : {0.3, 0.7}) {
    const Mesh m(1.0, -5000, 10001);
    double prev = 0.0;
    for (long W : {100L, 400L, 1600L}) {
      const auto u = sample(m, [W](double x) { return std::abs(x) <= static_cast<double>(W) ? 1.0 : 0.0; });
      const double centre = DiscreteFractionalLaplacian(s, m).apply(u)[5000];
      const double bound = 2.0 * fractional_laplacian_constant(s) / (2.0 * s) * std::pow(static_cast<double>(W), -2.0 * s);
      EXPECT_GT(centre, 0.0);
      EXPECT_LT(centre, bound);
      if (prev > 0.0) {
        EXPECT_LT(centre, prev);
      }
      prev = centre;
    }
  }
}

TEST(Apply, MeshMismatch) {
  const Mesh m(0.5, -4, 9);
  GridFunction u(m);
  EXPECT_THROW(apply(kernel_weights(0.4, 0.25, 20), u), std::invalid_argument);
  EXPECT_THROW(apply(kernel_weights(0.4, 0.5, 3), u), std::invalid_argument);
  const DiscreteFractionalLaplacian op(0.4, Mesh(0.5, -3, 7));
  EXPECT_THROW(op.apply(u), std::invalid_argument);
}

TEST(Oracle, ExampleOneProfile) {
  const double s = 0.4;
  auto U = [s](double y) { return std::pow(1.0 + y * y, -(0.5 - s)); };
  const double c = std::pow(4.0, s) * std::tgamma(0.5 + s) / std::tgamma(0.5 - s);
  EXPECT_NEAR(continuous_op_oracle(U, s, 0.0, 1e-10), c, 1e-9);
  // mpmath closed form at x = 1.5
  EXPECT_NEAR(continuous_op_oracle(U, s, 1.5, 1e-10), 0.06770412541198236058, 1e-9);
}

TEST(Oracle, CompactProfileGivesOne) {
  for (double s : {0.3, 0.6}) {
    const double c = 1.0 / std::tgamma(1.0 + 2.0 * s);
    auto U = [s, c](double y) { return std::abs(y) < 1.0 ? c * std::pow(1.0 - y * y, s) : 0.0; };
    EXPECT_NEAR(continuous_op_oracle(U, s, 0.5, 1e-7), 1.0, 1e-6);
    EXPECT_NEAR(continuous_op_oracle(U, s, 0.3, 1e-7), 1.0, 1e-6);
  }
}

TEST(Oracle, PlaneWaveAndGaussian) {
  EXPECT_NEAR(continuous_op_oracle([](double y) { return std::cos(y); }, 0.5, 0.0, 1e-6), 1.0, 1e-6);
  auto G = [](double y) { return std::exp(-y * y); };
  // mpmath Fourier integrals
  EXPECT_NEAR(continuous_op_oracle(G, 0.6, 0.7, 1e-11), 0.27932358164861029935, 1e-10);
  EXPECT_NEAR(continuous_op_oracle(G, 0.3, 0.0, 1e-11), 0.99559278421583461105, 1e-10);
  EXPECT_EQ(continuous_op_oracle([](double) { return 0.0; }, 0.5, 0.3, 1e-10), 0.0);
}

TEST(Consistency, GaussianErrorsDecay) {
  auto G = [](double y) { return std::exp(-y * y); };
  double prev = INFINITY;
  for (double h : {0.4, 0.2, 0.1, 0.05}) {
    const double e = consistency_error(G, std::nullopt, 0.3, Mesh::covering(-12.0, 12.0, h), -2.0, 2.0);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

TEST(Consistency, CompactProfileAwayFromEdgesDecays) {
  const double s = 0.5;
  auto U = [s](double y) { return std::abs(y) < 1.0 ? std::pow(1.0 - y * y, s) / std::tgamma(1.0 + 2.0 * s) : 0.0; };
  auto one = std::optional<std::function<double(double)>>([](double) { return 1.0; });
  double prev = INFINITY;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) {
    const double e = consistency_error(U, one, s, Mesh::covering(-2.0, 2.0, h), -0.5, 0.5);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

TEST(Consistency, ZeroProfileIsExact) {
  EXPECT_EQ(consistency_error([](double) { return 0.0; }, std::nullopt, 0.4, Mesh::covering(-3, 3, 0.1), -1, 1), 0.0);
}

TEST(Exterior, TailSumMatchesWideMesh) {
  // Both meshes see the whole lattice once their exterior sums are added.
  const double s = 0.4, h = 0.5;
  auto P = [s](double y) { return std::pow(1.0 + y * y, -(0.5 - s)); };
  const Mesh small = Mesh::covering(-50.0, 50.0, h);
  const Mesh wide = Mesh::covering(-20000.0, 20000.0, h);
  const auto a = DiscreteFractionalLaplacian(s, small).apply(sample(small, P));
  const auto ext = exterior_contribution(P, s, small);
  const auto b = DiscreteFractionalLaplacian(s, wide).apply(sample(wide, P));
  const auto ext_wide = exterior_contribution(P, s, wide);
  const auto off = static_cast<std::size_t>(small.first_index() - wide.first_index());
  double worst_without = 0.0, worst_with = 0.0;
  for (std::size_t i = 0; i < small.size(); ++i) {
    worst_without = std::max(worst_without, std::abs(a[i] - b[off + i]));
    worst_with = std::max(worst_with, std::abs(a[i] + ext[i] - b[off + i] - ext_wide[off + i]));
  }
  EXPECT_GT(worst_without, 1e-3);
  EXPECT_LT(worst_with, 1e-9);
}
