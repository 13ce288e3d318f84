#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "finslerlab/connections.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/sampling.hpp"

using namespace finslerlab;

namespace {

const ModelDef& example_model() {
  static const ModelDef m = builtin_model("matsumoto_example");
  return m;
}

TangentSample p0() { return make_sample(example_model(), {1, 0, 1}, {1, 1, 1}); }

}  // namespace

TEST(Connections, ExampleSprayAtP0) {
  const auto G = spray(example_model(), p0());
  EXPECT_NEAR(G[0], 0.0, 1e-12);
  EXPECT_NEAR(G[1], 1.0, 1e-12);
  EXPECT_NEAR(G[2], -4.5, 1e-11);
}

TEST(Connections, ConnectionContractsToTwiceSpray) {
  const Matrix<double> N = nonlinear_connection(example_model(), p0());
  const std::vector<double> expected{0.0, 2.0, -9.0};
  for (std::size_t i = 0; i < 3; ++i) {
    double ny = 0.0;
    for (std::size_t j = 0; j < 3; ++j) ny += N(i, j);
    EXPECT_NEAR(ny, expected[i], 1e-10);
  }
  EXPECT_NEAR(N(2, 2), 0.0, 1e-12);
}

TEST(Connections, ExampleCartanHorizontalCoefficients) {
  const Tensor3<double> G = cartan_hcoeffs(example_model(), p0());
  EXPECT_NEAR(G(0, 0, 2), 1.0, 1e-10);
  EXPECT_NEAR(G(1, 1, 2), 1.0, 1e-10);
  EXPECT_NEAR(G(2, 2, 2), 0.0, 1e-10);
}

TEST(Connections, SprayAndBerwaldStructureOnSamples) {
  const auto set = draw_samples(example_model(), 15, Box{}, 9, Stream::Core, domain_filter(example_model()));
  for (const auto& s : set.samples) {
    const auto G = spray(example_model(), s);
    auto scaled = s;
    for (double& v : scaled.y) v *= 2.5;
    const auto G2 = spray(example_model(), scaled);
    double scale = 1.0;
    for (double v : G2) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(G2[i], 6.25 * G[i], 1e-10 * scale);

    const auto B = berwald_coeffs(example_model(), s);
    const auto R = barthel_curvature(example_model(), s);
    double bmax = 1.0;
    double rmax = 1.0;
    for (double v : B.data()) bmax = std::max(bmax, std::abs(v));
    for (double v : R.data()) rmax = std::max(rmax, std::abs(v));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) {
          EXPECT_NEAR(B(i, j, k), B(i, k, j), 1e-10 * bmax);
          EXPECT_NEAR(R(i, j, k), -R(i, k, j), 1e-10 * rmax);
        }
  }
}

TEST(Connections, FlatPlaneHasNoConnection) {
  const ModelDef flat = builtin_model("euclid_concurrent");
  const auto s = make_sample(flat, {0.4, 0.9}, {1.0, -2.0});
  const auto c = connection_data(ModelFunction(flat), s);
  for (double v : c.sprayG) EXPECT_NEAR(v, 0.0, 1e-14);
  for (double v : c.N.data()) EXPECT_NEAR(v, 0.0, 1e-14);
  for (double v : c.berwald.data()) EXPECT_NEAR(v, 0.0, 1e-13);
  for (double v : c.curvR.data()) EXPECT_NEAR(v, 0.0, 1e-13);
}

TEST(Connections, ProbeRecoversConcurrencySigns) {
  const ModelDef flat = builtin_model("euclid_concurrent");
  const auto a = draw_samples(flat, 30, Box{}, 42, Stream::Core, domain_filter(flat));
  const CovariantReport rf = concurrency_probe(flat, a.samples);
  EXPECT_EQ(rf.sigma, -1.0);
  EXPECT_LE(rf.residual, 1e-12);
  EXPECT_LE(rf.vertical, 1e-12);

  const auto b = draw_samples(example_model(), 30, Box{}, 42, Stream::Core, domain_filter(example_model()));
  const CovariantReport re = concurrency_probe(example_model(), b.samples);
  EXPECT_EQ(re.sigma, 1.0);
  EXPECT_LE(re.residual, 1e-8);
  EXPECT_LE(re.vertical, 1e-10);
}

TEST(Connections, ProbeAtP0GivesIdentity) {
  const std::vector<TangentSample> batch{p0()};
  const CovariantReport r = concurrency_probe(example_model(), batch);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(r.hcov_phi(i, j), i == j ? 1.0 : 0.0, 1e-10);
}

TEST(Connections, ConstantFieldIsNotConcurrent) {
  const ModelDef m = parse_model("name = c\ndim = 2\nF = sqrt(y1^2 + y2^2)\nphi1 = 1\nphi2 = 0\n");
  const std::vector<TangentSample> batch{make_sample(m, {0.2, 0.3}, {1, 1}), make_sample(m, {1, -1}, {0.5, 2})};
  const CovariantReport r = concurrency_probe(m, batch);
  EXPECT_NEAR(r.trace_mean, 0.0, 1e-14);
  EXPECT_NEAR(r.residual, 1.0, 1e-12);
}

TEST(Connections, FlatGeodesicIsStraight) {
  const ModelDef flat = builtin_model("euclid_concurrent");
  const auto s = make_sample(flat, {0.1, 0.2}, {1.0, -0.5});
  const Trajectory t = integrate_geodesic(ModelFunction(flat), s, 1.0, 0.01);
  ASSERT_FALSE(t.escaped);
  ASSERT_EQ(t.points.size(), 101u);
  const auto& last = t.points.back();
  EXPECT_NEAR(last.t, 1.0, 0.0);
  EXPECT_NEAR(last.x[0], 1.1, 1e-13);
  EXPECT_NEAR(last.x[1], -0.3, 1e-13);
  EXPECT_LE(t.max_relative_drift(), 1e-14);
}

TEST(Connections, ExampleGeodesicConservesF) {
  const Trajectory t = integrate_geodesic(ModelFunction(example_model()), p0(), 0.1, 1e-3);
  ASSERT_FALSE(t.escaped);
  EXPECT_LE(t.max_relative_drift(), 1e-8);
  std::ostringstream csv;
  write_trajectory_csv(csv, t, 3);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "t,x1,x2,x3,y1,y2,y3,F");
}

TEST(Connections, GeodesicPreconditions) {
  const ModelFunction f(example_model());
  EXPECT_THROW(integrate_geodesic(f, p0(), 1.0, 0.0), PreconditionError);
  EXPECT_THROW(integrate_geodesic(f, p0(), -1.0, 0.1), PreconditionError);
}

TEST(Connections, GeodesicReportsEscapeTime) {
  const ModelDef half = parse_model("name = half\ndim = 2\nF = sqrt(y1^2 + y2^2)\nphi1 = 0\nphi2 = 0\ndomain = x1\n");
  const auto s = make_sample(half, {0.5, 0}, {-1, 1});
  const ModelFunction f(half);
  const Trajectory t = integrate_geodesic(f, s, 2.0, 1e-2);
  EXPECT_TRUE(t.escaped);
  EXPECT_NEAR(t.escape_time, 0.49, 1e-9);
  EXPECT_NEAR(t.points.back().x[0], 0.01, 1e-12);
  try {
    integrate_geodesic(f, s, 2.0, 1e-2, true);
    FAIL() << "expected DomainEscape";
  } catch (const DomainEscape& e) {
    EXPECT_NEAR(e.time(), 0.49, 1e-9);
  }
}
