#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "trackfuse/tensor.hpp"

namespace trackfuse::testing {

inline tensor::Tensor random_tensor(std::mt19937_64& rng, tensor::Shape shape,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(tensor::numel(shape));
  for (double& x : v) x = dist(rng);
  return tensor::Tensor(std::move(shape), std::move(v));
}

// Contracts an arbitrary tensor into a scalar with fixed random weights so
// that every output coordinate contributes a generic, non-zero gradient.
inline tensor::Tensor project(const tensor::Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return tensor::sum(tensor::mul(y, random_tensor(rng, y.shape())));
}

}  // namespace trackfuse::testing
