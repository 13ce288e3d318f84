#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "finslerlab/finite_difference.hpp"
#include "finslerlab/jet.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/function.hpp"

using namespace finslerlab;

namespace {

MultiIndex idx(std::initializer_list<int> a) { return MultiIndex(a); }

}  // namespace

TEST(Jet, LiftSeedsUnitCoefficients) {
  const std::vector<double> x{0.0};
  const std::vector<double> y{1.0};
  const auto c = lift(x, y, 1);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].value(), 0.0);
  EXPECT_EQ(c[0].derivative(idx({1, 0})), 1.0);
  EXPECT_EQ(c[0].derivative(idx({0, 1})), 0.0);
  EXPECT_EQ(c[1].value(), 1.0);
  EXPECT_EQ(c[1].derivative(idx({0, 1})), 1.0);
}

TEST(Jet, SquareCarriesTaylorCoefficients) {
  const std::vector<double> x{0.0};
  const std::vector<double> y{3.0};
  const auto c = lift(x, y, 3);
  const Jet f = c[1] * c[1];
  EXPECT_DOUBLE_EQ(f.value(), 9.0);
  EXPECT_DOUBLE_EQ(f.coefficient(idx({0, 1})), 6.0);
  EXPECT_DOUBLE_EQ(f.coefficient(idx({0, 2})), 1.0);
  EXPECT_DOUBLE_EQ(f.coefficient(idx({0, 3})), 0.0);
}

TEST(Jet, ElementaryFunctionsMatchClosedForms) {
  const std::vector<double> x{0.7};
  const std::vector<double> y{1.3};
  const auto c = lift(x, y, 3);
  const Jet s = sqrt(c[1]);
  EXPECT_NEAR(s.derivative(idx({0, 1})), 0.5 / std::sqrt(1.3), 1e-15);
  EXPECT_NEAR(s.derivative(idx({0, 3})), 0.375 * std::pow(1.3, -2.5), 1e-14);
  const Jet e = exp(c[0] * c[1]);
  EXPECT_NEAR(e.derivative(idx({1, 1})), std::exp(0.91) * (1.0 + 0.91), 1e-13);
  const Jet l = log(c[1]);
  EXPECT_NEAR(l.derivative(idx({0, 2})), -1.0 / (1.3 * 1.3), 1e-14);
  const Jet q = c[0] / c[1];
  EXPECT_NEAR(q.derivative(idx({1, 2})), 2.0 / std::pow(1.3, 3), 1e-14);
  const Jet t = sin(c[0]);
  EXPECT_NEAR(t.derivative(idx({3, 0})), -std::cos(0.7), 1e-15);
}

TEST(Jet, ValueSlotAgreesWithRealArithmetic) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.3, 2.0);
  for (int k = 0; k < 50; ++k) {
    const double a = u(rng);
    const double b = u(rng);
    const std::vector<double> x{a};
    const std::vector<double> y{b};
    const auto c = lift(x, y, 2);
    const Jet f = sqrt(c[0] * c[0] * c[1] + 3.0) / (c[1] - 0.1) + exp(-c[0]);
    EXPECT_NEAR(f.value(), std::sqrt(a * a * b + 3.0) / (b - 0.1) + std::exp(-a), 1e-14);
  }
}

TEST(Jet, DifferentiationLowersValidOrder) {
  const std::vector<double> x{1.0};
  const std::vector<double> y{2.0};
  const auto c = lift(x, y, 2);
  const Jet f = c[0] * c[1] * c[1];
  const Jet fy = f.d(1);
  EXPECT_EQ(fy.order(), 1);
  EXPECT_DOUBLE_EQ(fy.value(), 4.0);
  EXPECT_DOUBLE_EQ(fy.d(0).value(), 4.0);
  EXPECT_THROW(fy.d(0).d(0).d(0), PreconditionError);
}

TEST(Jet, DivisionByTinyValueIsAnError) {
  const std::vector<double> x{0.0};
  const std::vector<double> y{1.0};
  const auto c = lift(x, y, 1);
  EXPECT_THROW(1.0 / c[0], Error);
}

TEST(FiniteDifference, SquareFirstDerivative) {
  const ScalarField f = [](std::span<const double> p) { return p[0] * p[0]; };
  const std::vector<double> point{3.0};
  EXPECT_NEAR(fd_derivative(f, point, idx({1})), 6.0, 1e-9);
}

TEST(FiniteDifference, ConstantHasZeroDerivatives) {
  const ScalarField f = [](std::span<const double>) { return 4.25; };
  const std::vector<double> point{0.3, -1.0};
  for (const auto& a : {idx({1, 0}), idx({1, 1}), idx({0, 3}), idx({2, 1})}) {
    EXPECT_NEAR(fd_derivative(f, point, a), 0.0, 1e-6);
  }
}

TEST(FiniteDifference, StencilOutsideDomainRaises) {
  const ScalarField f = [](std::span<const double> p) { return std::sqrt(p[0]); };
  const DomainTest inside = [](std::span<const double> p) { return p[0] > 0.0; };
  const std::vector<double> point{1e-7};
  EXPECT_THROW(fd_derivative(f, point, idx({1}), {}, inside), DomainEscape);
  EXPECT_THROW(fd_derivative(f, point, idx({4}), {}, inside), PreconditionError);
}

TEST(FiniteDifference, ExampleFAlongY3MatchesJet) {
  const ModelFunction f(builtin_model("matsumoto_example"));
  const std::vector<double> x{1, 0, 1};
  const std::vector<double> y{1, 1, 1};
  const Jet F = sqrt(f.squared(lift(x, y, 1)));
  EXPECT_NEAR(F.value(), std::sqrt(10.0), 1e-14);
  const ScalarField field = [&](std::span<const double> c) { return f.value(c); };
  const auto point = coordinates(x, y);
  const MultiIndex a{0, 0, 0, 0, 0, 1};
  const double fd = fd_derivative(field, point, a);
  EXPECT_LE(std::abs(fd - F.derivative(a)) / std::max(1.0, std::abs(F.derivative(a))), 1e-5);
}

TEST(FiniteDifference, RichardsonImprovesThirdDerivative) {
  const ScalarField f = [](std::span<const double> p) { return std::exp(2.0 * p[0]); };
  const std::vector<double> point{0.4};
  DiffConfig plain;
  plain.fd_step = 1e-3;
  DiffConfig rich = plain;
  rich.richardson = true;
  const double exact = 8.0 * std::exp(0.8);
  const double e1 = std::abs(fd_derivative(f, point, idx({3}), plain) - exact);
  const double e2 = std::abs(fd_derivative(f, point, idx({3}), rich) - exact);
  EXPECT_LT(e2, e1);
}
