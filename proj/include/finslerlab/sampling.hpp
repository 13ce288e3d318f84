#pragma once

// Seeded rejection sampling of tangent samples.
//
// Every suite draws from its own stream: the engine is std::mt19937_64
// seeded with splitmix64(seed ^ golden * (stream + 1)), and a uniform double
// in [0, 1) is (next() >> 11) * 2^-53. Coordinates are drawn x1..xn then
// y1..yn, each uniform in its box interval.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "finslerlab/error.hpp"
#include "finslerlab/function.hpp"
#include "finslerlab/model.hpp"

namespace finslerlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
}

/// Stream ids used by the verification harness.
enum class Stream : std::uint64_t {
  Core = 1,
  Numerics = 2,
  ChangePositive = 3,
  ChangeNegative = 4,
  Nondegeneracy = 5,
  Geodesic = 6,
};

class SampleStream {
 public:
  SampleStream(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}
  SampleStream(std::uint64_t seed, Stream stream) : SampleStream(seed, static_cast<std::uint64_t>(stream)) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

struct Interval {
  double lo = 0.5;
  double hi = 2.0;
};

struct Box {
  Interval x;
  Interval y;
};

struct SampleSet {
  std::vector<TangentSample> samples;
  std::size_t attempts = 0;
  std::size_t rejected = 0;
};

using SampleFilter = std::function<bool(const TangentSample&)>;

/// Accepts samples inside the model domain where F^2 is positive and finite.
inline SampleFilter domain_filter(const ModelDef& model) {
  auto f = std::make_shared<ModelFunction>(model);
  return [f](const TangentSample& s) { return s.inside() && f->contains(coordinates(s.x, s.y)); };
}

/// Additionally requires F > Phi and |margin| > min_margin F for the change.
inline SampleFilter hat_filter(const ModelDef& model, int orientation, double min_margin = 0.1) {
  auto hat = std::make_shared<ChangedFunction>(ModelFunction(model), orientation, min_margin);
  return [hat](const TangentSample& s) { return s.inside() && hat->contains(coordinates(s.x, s.y)); };
}

/// Draws until `count` samples pass `accept` or count * max_factor attempts were made.
inline SampleSet draw_samples(const ModelDef& model, std::size_t count, const Box& box, std::uint64_t seed,
                              Stream stream, const SampleFilter& accept, std::size_t max_factor = 1000) {
  if (!(box.x.lo < box.x.hi) || !(box.y.lo < box.y.hi)) throw PreconditionError("sampling box is empty");
  SampleStream rng(seed, stream);
  SampleSet out;
  const std::size_t n = model.n();
  const std::size_t limit = std::max<std::size_t>(count * max_factor, 1000);
  while (out.samples.size() < count && out.attempts < limit) {
    ++out.attempts;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (auto& v : x) v = rng.uniform(box.x.lo, box.x.hi);
    for (auto& v : y) v = rng.uniform(box.y.lo, box.y.hi);
    TangentSample s = make_sample(model, std::move(x), std::move(y));
    if (accept(s)) {
      out.samples.push_back(std::move(s));
    } else {
      ++out.rejected;
    }
  }
  return out;
}

}  // namespace finslerlab
