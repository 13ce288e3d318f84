#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "finslerlab/verify.hpp"

using namespace finslerlab;

namespace {

const std::string kRoot = FINSLERLAB_SOURCE_DIR;

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(Models, ShippedFilesMatchBuiltins) {
  for (const auto& [file, name] : {std::pair{"matsumoto_example.fmod", "matsumoto_example"},
                                   std::pair{"euclid_concurrent.fmod", "euclid_concurrent"}}) {
    const ModelDef a = load_model(kRoot + "/models/" + file);
    const ModelDef b = builtin_model(name);
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.dim, b.dim);
    EXPECT_TRUE(equal(a.F, b.F));
    ASSERT_EQ(a.domain.size(), b.domain.size());
    for (std::size_t k = 0; k < a.domain.size(); ++k) EXPECT_TRUE(equal(a.domain[k], b.domain[k]));
    for (std::size_t k = 0; k < a.phi.size(); ++k) EXPECT_TRUE(equal(a.phi[k], b.phi[k]));
  }
  EXPECT_TRUE(is_matsumoto_example(load_model(kRoot + "/models/matsumoto_example.fmod")));
  EXPECT_THROW(builtin_model("nope"), PreconditionError);
}

TEST(Models, FixtureTableIsReproduced) {
  const auto rows = load_fixtures(kRoot + "/fixtures/reference_values.txt");
  ASSERT_GT(rows.size(), 100u);
  std::set<std::string> names;
  for (const auto& fx : rows) {
    const double v = fixture_engine_value(builtin_model(fx.model), fx);
    EXPECT_LE(rel(v, fx.value), fx.tolerance) << fx.model << " " << fx.name << " engine " << v << " table " << fx.value;
    names.insert(fx.name);
  }
  for (const char* required : {"g11", "g12", "g22", "ginv22", "C111", "G3", "Gamma1_13", "a12", "margin", "Fhat"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
}

TEST(Models, FixtureParserRejectsShortRows) {
  EXPECT_THROW(parse_fixtures("matsumoto_example g11 1,0,1 1,1,1 7\n"), SyntaxError);
  EXPECT_THROW(parse_fixtures("m g11 1,x,1 1,1,1 7 1e-8 p\n"), SyntaxError);
  EXPECT_EQ(parse_fixtures("# only a comment\n\n").size(), 0u);
}

TEST(Models, ClosedFormsAgreeWithEngineOnSamples) {
  const ModelDef model = builtin_model("matsumoto_example");
  const ModelFunction f(model);
  const auto set = draw_samples(model, 50, Box{}, 42, Stream::Core, domain_filter(model));
  ASSERT_EQ(set.samples.size(), 50u);
  for (const auto& s : set.samples) {
    const MetricData m = metric_data(f, s);
    const auto g = example::g(s.x, s.y);
    const auto gi = example::ginv(s.x, s.y);
    const auto C = example::cartan_torsion(s.x, s.y);
    const auto a = example::a(s.x, s.y);
    const double th = example::theta(s.x, s.y);
    EXPECT_LE(rel(m.F * m.F, example::F2(s.x, s.y)), 1e-12);
    double gs = 1.0, gis = 1.0, cs = 1.0;
    for (double v : g.data()) gs = std::max(gs, std::abs(v));
    for (double v : gi.data()) gis = std::max(gis, std::abs(v));
    for (double v : C.data()) cs = std::max(cs, std::abs(v));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_LE(std::abs(m.g(i, j) - g(i, j)) / gs, 1e-10);
        EXPECT_LE(std::abs(m.ginv(i, j) - gi(i, j)) / gis, 1e-8);
        EXPECT_LE(std::abs(th * a(i, j) - g(i, j)) / gs, 1e-12);
        for (std::size_t k = 0; k < 3; ++k) EXPECT_LE(std::abs(m.cartanC(i, j, k) - C(i, j, k)) / cs, 1e-9);
      }
    const auto G = spray(f, s);
    const auto Gc = example::spray(s.x, s.y);
    double sc = 1.0;
    for (double v : Gc) sc = std::max(sc, std::abs(v));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(std::abs(G[i] - Gc[i]) / sc, 1e-10);
    const auto Gamma = cartan_hcoeffs(f, s);
    const auto Gk = example::cartan_gamma(s.x);
    EXPECT_LE(rel(Gamma(0, 0, 2), Gk[0]), 1e-9);
    EXPECT_LE(rel(Gamma(1, 1, 2), Gk[1]), 1e-9);
    EXPECT_LE(std::abs(Gamma(2, 2, 2) - Gk[2]), 1e-9);
  }
}
