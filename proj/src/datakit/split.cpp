#include "dfseg/datakit.hpp"

#include "dfseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dfseg::datakit {

DatasetManifest split_dataset(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0, 1)");
  const std::size_t n = manifest.samples.size();
  if (n == 0) throw ValidationError("cannot split an empty dataset");
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetManifest out = manifest;
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[order[i]].split = i < n_train ? Split::train : Split::val;
  }
  return out;
}

}  // namespace dfseg::datakit
