#ifndef EIVAR_SAMPLING_HPP
#define EIVAR_SAMPLING_HPP

#include "eivar/common.hpp"

#include <random>

namespace eivar {

using Rng = std::mt19937_64;

/// Latin hypercube sample of n points in the box, one row per point.
[[nodiscard]] Matrix latin_hypercube(const Bounds& bounds, Index n, Rng& rng);

/// Independent uniform draws in the box, one row per point.
[[nodiscard]] Matrix uniform_sample(const Bounds& bounds, Index n, Rng& rng);

/// Tensor grid with `per_dim` equally spaced nodes (endpoints included) per axis.
[[nodiscard]] Matrix tensor_grid(const Bounds& bounds, Index per_dim);

[[nodiscard]] double standard_normal_cdf(double z);
[[nodiscard]] double standard_normal_pdf(double z);

}  // namespace eivar

#endif
