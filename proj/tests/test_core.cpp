#include <cmath>

#include <gtest/gtest.h>

#include "finslerlab/core.hpp"
#include "finslerlab/models.hpp"
#include "finslerlab/sampling.hpp"

using namespace finslerlab;

namespace {

TangentSample p0() { return make_sample(builtin_model("matsumoto_example"), {1, 0, 1}, {1, 1, 1}); }

}  // namespace

TEST(Core, ExampleMetricAtP0) {
  const MetricData m = metric_data(builtin_model("matsumoto_example"), p0());
  EXPECT_NEAR(m.F, std::sqrt(10.0), 1e-13);
  EXPECT_NEAR(m.E, 5.0, 1e-12);
  EXPECT_NEAR(m.g(0, 0), 7.0, 1e-11);
  EXPECT_NEAR(m.g(0, 1), -10.0, 1e-11);
  EXPECT_NEAR(m.g(1, 0), -10.0, 1e-11);
  EXPECT_NEAR(m.g(1, 1), 22.0, 1e-11);
  EXPECT_NEAR(m.g(2, 2), 1.0, 1e-12);
  EXPECT_NEAR(m.g(0, 2), 0.0, 1e-12);
  EXPECT_NEAR(m.cartanC(0, 0, 0), -12.0, 1e-10);
  EXPECT_NEAR(m.cartanC(0, 0, 1), 12.0, 1e-10);
  EXPECT_NEAR(m.cartanC(1, 1, 1), 12.0, 1e-10);
  EXPECT_NEAR(m.ginv(1, 1), 3.5 / 27.0, 1e-12);
  EXPECT_NEAR(m.det, 54.0, 1e-9);
  EXPECT_EQ(m.signature.positive, 3);
  EXPECT_EQ(m.signature.negative, 0);
}

TEST(Core, FlatPlaneIsTrivial) {
  const ModelDef model = builtin_model("euclid_concurrent");
  const MetricData m = metric_data(model, make_sample(model, {0.3, -1.2}, {0.6, 0.8}));
  EXPECT_NEAR(m.F, 1.0, 1e-15);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(m.ell[i], i == 0 ? 0.6 : 0.8, 1e-15);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(m.g(i, j), i == j ? 1.0 : 0.0, 1e-14);
      for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(m.cartanC(i, j, k), 0.0, 1e-13);
    }
  }
}

TEST(Core, InverseAndKernelPropertiesOnRandomSamples) {
  const ModelDef model = builtin_model("matsumoto_example");
  const auto set = draw_samples(model, 40, Box{}, 3, Stream::Core, domain_filter(model));
  ASSERT_EQ(set.samples.size(), 40u);
  for (const auto& s : set.samples) {
    const MetricData m = metric_data(model, s);
    double gy_scale = 1.0;
    for (std::size_t i = 0; i < 3; ++i) {
      double ell_y = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        double e = 0.0;
        for (std::size_t k = 0; k < 3; ++k) e += m.g(i, k) * m.ginv(k, j);
        EXPECT_NEAR(e, i == j ? 1.0 : 0.0, 1e-8 * m.condition);
        EXPECT_NEAR(m.hbar(i, j), m.hbar(j, i), 1e-10 * std::max(1.0, std::abs(m.hbar(i, j))));
        double c_y = 0.0;
        for (std::size_t k = 0; k < 3; ++k) c_y += m.cartanC(i, j, k) * s.y[k];
        gy_scale = std::max(gy_scale, std::abs(m.cartanC(i, j, 0)));
        EXPECT_NEAR(c_y, 0.0, 1e-9 * gy_scale);
      }
      ell_y += m.ell[i] * s.y[i];
      (void)ell_y;
    }
    double ly = 0.0;
    for (std::size_t i = 0; i < 3; ++i) ly += m.ell[i] * s.y[i];
    EXPECT_NEAR(ly, m.F, 1e-10 * m.F);
  }
}

TEST(Core, HomogeneityOfShippedModels) {
  for (const auto& model : builtin_models()) {
    const auto set = draw_samples(model, 20, Box{}, 5, Stream::Core, domain_filter(model));
    for (const auto& s : set.samples) EXPECT_LE(homogeneity_report(model, s).worst(), 1e-9) << model.name;
  }
}

TEST(Core, NonHomogeneousFunctionIsFlagged) {
  const ModelDef bad = parse_model("name = bad\ndim = 2\nF = y1^2 + y2^2 + 1\nphi1 = 0\nphi2 = 0\n");
  const auto s = make_sample(bad, {1, 1}, {1, 0.5});
  const auto rep = homogeneity_report(bad, s);
  EXPECT_GT(rep.worst(), 0.1);
  EXPECT_EQ(rep.residuals.size(), 3u);
}

TEST(Core, SingularMetricIsReported) {
  const ModelDef deg = parse_model("name = deg\ndim = 2\nF = abs(y1 + y2)\nphi1 = 0\nphi2 = 0\n");
  EXPECT_THROW(metric_data(deg, make_sample(deg, {1, 1}, {1, 0.5})), SingularMetric);
}

TEST(Core, IndefiniteSignatureIsCounted) {
  const ModelDef lor = parse_model("name = lor\ndim = 2\nF = sqrt(y1^2 - y2^2)\nphi1 = 0\nphi2 = 0\n");
  const MetricData m = metric_data(lor, make_sample(lor, {0, 0}, {2, 1}));
  EXPECT_EQ(m.signature.positive, 1);
  EXPECT_EQ(m.signature.negative, 1);
}

TEST(Core, OutsideDomainRaises) {
  const ModelDef model = builtin_model("matsumoto_example");
  EXPECT_THROW(metric_data(model, make_sample(model, {1, 0, 1}, {0, 1, 1})), DomainEscape);
}
