// Small helpers shared by the unit and acceptance tests.

#ifndef LESIONWISE_TESTS_FIXTURES_HPP
#define LESIONWISE_TESTS_FIXTURES_HPP

#include "lesionwise/phantoms.hpp"

#include <vector>

namespace lesionwise::testing {

inline std::vector<double> to_vector(const Volume<double>& v) {
  return std::vector<double>(v.array().data(), v.array().data() + v.size());
}

inline Volume<double> from_vector(const Volume<double>& like, const std::vector<double>& x) {
  Volume<double> out = like;
  for (Index i = 0; i < out.size(); ++i) out[i] = x[static_cast<std::size_t>(i)];
  return out;
}

/// Seeded phantom with `n` well separated components.
inline Phantom random_phantom(const Shape& shape, int n, std::uint64_t seed, const Spacing& spacing = {},
                              Index max_size = 3) {
  return build_phantom(random_phantom_spec(shape, spacing, n, seed, max_size));
}

}  // namespace lesionwise::testing

#endif  // LESIONWISE_TESTS_FIXTURES_HPP
