#include <gtest/gtest.h>

#include "finslerlab/model.hpp"
#include "finslerlab/models.hpp"

using namespace finslerlab;

namespace {

const char* kFlat = R"(# flat plane
name = flat
dim = 2
F = sqrt(y1^2 + y2^2)
phi1 = -x1
phi2 = -x2
)";

}  // namespace

TEST(Model, ParsesFlatPlane) {
  const ModelDef m = parse_model(kFlat);
  EXPECT_EQ(m.name, "flat");
  EXPECT_EQ(m.dim, 2);
  EXPECT_TRUE(m.domain.empty());
  const std::vector<double> x{0.3, -0.4};
  EXPECT_EQ(concurrent_field(m, x), (std::vector<double>{-0.3, 0.4}));
}

TEST(Model, PhiMayNotDependOnY) {
  EXPECT_THROW(parse_model("name = m\ndim = 3\nF = sqrt(y1^2+y2^2+y3^2)\nphi1 = 0\nphi2 = 0\nphi3 = y1\n"),
               ValidationError);
}

TEST(Model, DimensionMismatch) {
  EXPECT_THROW(parse_model("name = m\ndim = 2\nF = sqrt(y1^2+y2^2+y3^2)\nphi1 = 0\nphi2 = 0\n"), ValidationError);
  EXPECT_THROW(parse_model("name = m\ndim = 2\nF = sqrt(y1^2+y2^2)\nphi1 = 0\nphi2 = 0\nphi3 = 0\n"),
               ValidationError);
  EXPECT_THROW(parse_model("name = m\ndim = 2\nF = sqrt(y1^2+y2^2)\nphi1 = 0\n"), ValidationError);
}

TEST(Model, SyntaxErrorsReportLines) {
  try {
    parse_model("name = m\ndim = 2\nF = sqrt(y1^2 + )\nphi1 = 0\nphi2 = 0\n");
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  EXPECT_THROW(parse_model("name = m\ndim = 2\ncolour = red\n"), SyntaxError);
  EXPECT_THROW(parse_model("name = m\ndim = two\n"), SyntaxError);
}

TEST(Model, ParametersAreSubstituted) {
  const ModelDef m = parse_model("name = m\ndim = 2\nparam k = 2.5\nF = k*sqrt(y1^2 + y2^2)\nphi1 = 0\nphi2 = 0\n");
  const std::vector<double> c{0, 0, 3, 4};
  EXPECT_DOUBLE_EQ(evaluate<double>(m.F, std::span<const double>(c), 2, m.param_values), 12.5);
}

TEST(Model, ExampleDomainExcludesCoordinateHyperplanes) {
  const ModelDef m = builtin_model("matsumoto_example");
  EXPECT_TRUE(make_sample(m, {1, 0, 1}, {1, 1, 1}).inside());
  EXPECT_FALSE(make_sample(m, {1, 0, 1}, {0, 1, 1}).inside());
  EXPECT_FALSE(make_sample(m, {0, 0, 1}, {1, 1, 1}).inside());
  EXPECT_FALSE(make_sample(m, {1, 0, 0}, {1, 1, 1}).inside());
  EXPECT_FALSE(make_sample(m, {1, 0, 1}, {1, 0, 1}).inside());
  EXPECT_THROW(require_inside(make_sample(m, {1, 0, 1}, {0, 1, 1})), DomainEscape);
  EXPECT_THROW(make_sample(m, {1, 0}, {1, 1}), PreconditionError);
}

TEST(Model, ZeroVelocityIsOutside) {
  const ModelDef m = builtin_model("euclid_concurrent");
  EXPECT_FALSE(make_sample(m, {1, 1}, {0, 0}).inside());
}

TEST(Model, PrintParseRoundTrip) {
  for (const auto& m : builtin_models()) {
    const ModelDef back = parse_model(print_model(m));
    EXPECT_EQ(back.name, m.name);
    EXPECT_EQ(back.dim, m.dim);
    EXPECT_TRUE(equal(back.F, m.F));
    ASSERT_EQ(back.domain.size(), m.domain.size());
    for (std::size_t k = 0; k < m.phi.size(); ++k) EXPECT_TRUE(equal(back.phi[k], m.phi[k]));
  }
}

TEST(Model, MissingFileIsAnError) { EXPECT_THROW(load_model("/nonexistent/model.fmod"), Error); }
