#ifndef EIVAR_BOXED_LBFGS_HPP
#define EIVAR_BOXED_LBFGS_HPP

#include "eivar/common.hpp"

#include <functional>
#include <optional>

namespace eivar::detail {

/// Objective value at v; fills grad (same length as v) when non-null. nullopt marks failure.
using BoxedObjective = std::function<std::optional<double>(const Vector& v, Vector* grad)>;

struct BoxedResult {
    Vector v;
    double value = 0.0;
};

/// Local maximization of f over a box via LBFGS on a sigmoid reparameterization.
[[nodiscard]] std::optional<BoxedResult> maximize_in_box(const Bounds& box, const Vector& start,
                                                         const BoxedObjective& f,
                                                         int max_iterations);

/// Central-difference gradient of f, stepping by h * (1 + |v_i|) and clipping to the box.
[[nodiscard]] std::optional<Vector> central_gradient(const Bounds& box, const Vector& v,
                                                     const std::function<std::optional<double>(
                                                         const Vector&)>& f,
                                                     double h = 1e-6);

}  // namespace eivar::detail

#endif
