#include <cmath>

#include <gtest/gtest.h>

#include "finslerlab/matsumoto.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/sampling.hpp"

using namespace finslerlab;

namespace {

const ModelDef& example_model() {
  static const ModelDef m = builtin_model("matsumoto_example");
  return m;
}

const ModelDef& flat_model() {
  static const ModelDef m = builtin_model("euclid_concurrent");
  return m;
}

TangentSample p0() { return make_sample(example_model(), {1, 0, 1}, {1, 1, 1}); }

ModelDef example_without_field() {
  ModelDef m = parse_model(kMatsumotoExampleSource);
  m.phi[2] = parse_expression("0");
  return m;
}

std::vector<TangentSample> hat_batch(const ModelDef& m, int orientation, std::size_t count, std::uint64_t seed) {
  return draw_samples(m, count, Box{}, seed, orientation > 0 ? Stream::ChangePositive : Stream::ChangeNegative,
                      hat_filter(m, orientation))
      .samples;
}

}  // namespace

TEST(Matsumoto, ScalarsAtP0PositiveOrientation) {
  const ChangeScalars c = change_scalars(example_model(), p0(), 1);
  EXPECT_NEAR(c.F, std::sqrt(10.0), 1e-13);
  EXPECT_NEAR(c.Phi, 1.0, 1e-14);
  EXPECT_NEAR(c.p2, 1.0, 1e-12);
  EXPECT_NEAR(c.margin, 6.48683, 1e-5);
  EXPECT_NEAR(c.f1, 0.408383, 1e-6);
  EXPECT_NEAR(c.f2, 9.74984, 1e-5);
  EXPECT_NEAR(c.Fhat, 4.62475, 1e-5);
}

TEST(Matsumoto, ScalarsAtP0NegativeOrientation) {
  const ChangeScalars c = change_scalars(example_model(), p0(), -1);
  const double F = std::sqrt(10.0);
  const double margin = 3.0 * F + 3.0;
  EXPECT_NEAR(c.Phi, -1.0, 1e-14);
  EXPECT_NEAR(c.margin, margin, 1e-12);
  EXPECT_NEAR(c.f1, F * (-4.0 - F) / margin, 1e-12);
  EXPECT_NEAR(c.f2, 2.0 * F * F * F / margin, 1e-12);
  EXPECT_NEAR(c.Fhat, 10.0 / (F + 1.0), 1e-12);
}

TEST(Matsumoto, PredictedSprayAtP0) {
  const ChangeSample s = evaluate_change(example_model(), p0(), 1);
  const double F = std::sqrt(10.0);
  const double margin = 3.0 * F - 3.0;
  const double f1 = F * (4.0 - F) / margin;
  const double f2 = 2.0 * F * F * F / margin;
  EXPECT_NEAR(s.spray_hat[0], 0.5 * f1, 1e-12);
  EXPECT_NEAR(s.spray_hat[1], 1.0 + 0.5 * f1, 1e-12);
  EXPECT_NEAR(s.spray_hat[2], -4.5 + 0.5 * f1 - 0.5 * f2, 1e-11);
  EXPECT_NEAR(s.spray_hat[0], 0.204191, 1e-6);
}

TEST(Matsumoto, ExampleChangeHoldsUnderNegativeOrientationOnly) {
  const ChangeSample minus = evaluate_change(example_model(), p0(), -1);
  ASSERT_TRUE(minus.has_direct);
  for (const auto& p : minus.change) EXPECT_LE(pair_residual(p), 1e-6);
  const ChangeSample plus = evaluate_change(example_model(), p0(), 1);
  // the metric side is pointwise and does not see the orientation
  EXPECT_LE(pair_residual(plus.change[2]), 1e-8);
  EXPECT_GT(pair_residual(plus.change[4]), 1e-3);
}

TEST(Matsumoto, HatDomainBoundary) {
  const auto s = make_sample(flat_model(), {1.0 - 1e-12, 0.0}, {-1.0, 0.0});
  EXPECT_THROW(change_scalars(flat_model(), s, 1), OutsideHatDomain);
  EXPECT_NO_THROW(change_scalars(flat_model(), s, -1));
  const double theta = std::acos(-0.95);
  const auto root = make_sample(flat_model(), {0.8, 0.0}, {std::cos(theta), std::sin(theta)});
  EXPECT_THROW(change_scalars(flat_model(), root, 1), DegenerateMargin);
  EXPECT_THROW(change_scalars(flat_model(), p0(), 2), PreconditionError);
}

TEST(Matsumoto, FlatScalarsAtSpecifiedPoints) {
  const ChangeScalars a = change_scalars(flat_model(), make_sample(flat_model(), {0.8, 0.0}, {1.0, 0.0}), 1);
  EXPECT_NEAR(a.Phi, -0.8, 1e-15);
  EXPECT_NEAR(a.p2, 0.64, 1e-14);
  EXPECT_NEAR(a.margin, 4.68, 1e-14);
  const ChangeScalars b = change_scalars(flat_model(), make_sample(flat_model(), {0.0, 0.0}, {1.0, 0.0}), 1);
  EXPECT_EQ(b.Phi, 0.0);
  EXPECT_NEAR(b.Fhat, 1.0, 1e-15);
  EXPECT_NEAR(b.f1, -1.0, 1e-15);
  EXPECT_NEAR(b.f2, 2.0, 1e-15);
}

TEST(Matsumoto, ChangedFunctionReducesToBaseWhereFieldVanishes) {
  const ChangedFunction hat(ModelFunction(flat_model()), 1);
  const std::vector<double> c{0.0, 0.0, 0.3, -0.4};
  EXPECT_NEAR(hat.value(c), 0.5, 1e-15);
}

TEST(Matsumoto, FlatChangeSuitePasses) {
  const auto batch = hat_batch(flat_model(), 1, 40, 42);
  ASSERT_EQ(batch.size(), 40u);
  const auto res = change_suite(flat_model(), batch, 1);
  EXPECT_EQ(res.excluded, 0u);
  for (const auto& e : res.report.identities) EXPECT_TRUE(e.passed) << e.name << " " << e.residual;
}

TEST(Matsumoto, ExampleChangeSuitePasses) {
  const auto batch = hat_batch(example_model(), -1, 25, 42);
  const auto res = change_suite(example_model(), batch, -1);
  for (const auto& e : res.report.identities) EXPECT_TRUE(e.passed) << e.name << " " << e.residual;
  EXPECT_GT(res.report.find("obstruction.norm").residual, 1e-3);
}

TEST(Matsumoto, LemmaSuiteOnBothModels) {
  for (const auto& [model, orientation] : {std::pair{flat_model(), 1}, std::pair{example_model(), -1}}) {
    const auto rep = lemma_identity_suite(model, hat_batch(model, orientation, 25, 7), orientation);
    EXPECT_EQ(rep.identities.size(), lemma_identities().size());
    for (const auto& e : rep.identities) EXPECT_TRUE(e.passed) << model.name << " " << e.name;
  }
}

TEST(Matsumoto, ObstructionMatchesFiniteDifferences) {
  DiffConfig cfg;
  cfg.fd_step = 1e-4;
  cfg.richardson = true;
  const ObstructionReport r = concurrency_obstruction(example_model(), p0(), -1, cfg);
  EXPECT_GT(r.norm, 1e-3);
  EXPECT_LE(r.fd_residual, 1e-5);
}

TEST(Matsumoto, ObstructionVanishesWithoutField) {
  const ModelDef m = example_without_field();
  const ObstructionReport r = concurrency_obstruction(m, make_sample(m, {1, 0, 1}, {1, 1, 1}), 1);
  EXPECT_EQ(r.norm, 0.0);
}

TEST(Matsumoto, ProjectiveNonProportionality) {
  const std::vector<TangentSample> at_p0{p0()};
  const ProjectiveReport r = projective_check(example_model(), at_p0, -1);
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_FALSE(r.points[0].parallel);
  EXPECT_TRUE(r.passed);
  EXPECT_GT(r.min_ratio, 1e-8);

  const std::vector<TangentSample> collinear{make_sample(flat_model(), {0.8, 0.0}, {-1.0, 0.0})};
  const ProjectiveReport c = projective_check(flat_model(), collinear, -1);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_TRUE(c.points[0].parallel);
  EXPECT_TRUE(c.passed);

  const ModelDef none = example_without_field();
  const std::vector<TangentSample> zero{make_sample(none, {1, 0, 1}, {1, 1, 1})};
  const ProjectiveReport z = projective_check(none, zero, 1);
  EXPECT_TRUE(z.skipped);
  EXPECT_EQ(z.diagnostic, "concurrent field required nonvanishing");
}

TEST(Matsumoto, FlatRayReachesDegeneracy) {
  const RayReport r = nondegeneracy_ray(flat_model(), 1, Ray{{0.8, 0.0}, 0, 1});
  ASSERT_TRUE(r.found) << r.note;
  EXPECT_NEAR(r.theta_root, std::acos(-0.95), 1e-9);
  EXPECT_LE(r.ratio, 1e-3);
  EXPECT_TRUE(r.monotone);
}

TEST(Matsumoto, ScanHasNoViolations) {
  const auto batch = draw_samples(flat_model(), 200, Box{{-1.0, 1.0}, {-1.0, 1.0}}, 42, Stream::Nondegeneracy,
                                  domain_filter(flat_model()))
                         .samples;
  const NondegeneracyScan scan = nondegeneracy_scan(flat_model(), batch, 1);
  EXPECT_TRUE(scan.violations.empty());
  EXPECT_GT(scan.points.size(), 100u);
}

TEST(Matsumoto, RationalDecompositions) {
  const auto batch = hat_batch(example_model(), -1, 30, 42);
  const IdentityReport rep = rational_decomposition_check(example_model(), batch, -1);
  for (const auto& e : rep.identities) EXPECT_LE(e.residual, 1e-9) << e.name;
  EXPECT_THROW(rational_decomposition_check(flat_model(), hat_batch(flat_model(), 1, 2, 1), 1), PreconditionError);
}

TEST(Matsumoto, SquaredDenominatorFormOfA12AgreesOnlyAtUnitY1) {
  const auto g12 = [](double x1, double x3, double y1, double y2) {
    const double a = x1 * x1;
    return -2.0 * x3 * x3 * a * y2 * y2 * (2.0 * a * y2 + 3.0 * y1) / (y1 * y1 * y1);
  };
  const auto squared_form = [](double x1, double y1, double y2) {
    const double a = x1 * x1;
    return -2.0 * a * y2 * y2 * (2.0 * a * y2 + 3.0 * y1) / (y1 * y1);
  };
  const double x1 = 1.3, x3 = 0.7, y2 = 1.2;
  for (double y1 : {1.0, 0.9, 1.7}) {
    const double theta = (x3 / y1) * (x3 / y1);
    const std::vector<double> x{x1, 7.0, x3};
    const std::vector<double> y{y1, y2, 0.6};
    EXPECT_NEAR(theta * example::a(x, y)(0, 1), g12(x1, x3, y1, y2), 1e-12);
    const double mismatch = std::abs(theta * squared_form(x1, y1, y2) - g12(x1, x3, y1, y2));
    if (y1 == 1.0) {
      EXPECT_LT(mismatch, 1e-12);
    } else {
      EXPECT_GT(mismatch, 1e-3);
    }
  }
}
