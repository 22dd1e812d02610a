#include "eivar/common.hpp"
#include "eivar/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace eivar {

Bounds::Bounds(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
    if (lower.size() != upper.size()) {
        throw DimensionMismatch("bounds: lower and upper differ in length");
    }
    for (Index i = 0; i < lower.size(); ++i) {
        if (!(lower[i] < upper[i])) {
            throw DimensionMismatch("bounds: lower must be strictly below upper");
        }
    }
}

bool Bounds::contains(const Vector& theta, double slack) const {
    if (theta.size() != dim()) return false;
    for (Index i = 0; i < theta.size(); ++i) {
        if (!(theta[i] >= lower[i] - slack && theta[i] <= upper[i] + slack)) return false;
    }
    return true;
}

double Bounds::volume() const { return width().prod(); }

Vector Bounds::to_unit(const Vector& theta) const {
    return ((theta - lower).array() / width().array()).matrix();
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    // splitmix64 finalizer applied to a mix of the three words
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(base) ^ stream) ^ index);
}

Matrix latin_hypercube(const Bounds& bounds, Index n, Rng& rng) {
    const Index p = bounds.dim();
    Matrix out(n, p);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index j = 0; j < p; ++j) {
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        const double w = bounds.upper[j] - bounds.lower[j];
        for (Index i = 0; i < n; ++i) {
            const double u = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + unif(rng)) /
                             static_cast<double>(n);
            out(i, j) = bounds.lower[j] + w * u;
        }
    }
    return out;
}

Matrix uniform_sample(const Bounds& bounds, Index n, Rng& rng) {
    const Index p = bounds.dim();
    Matrix out(n, p);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) {
            out(i, j) = bounds.lower[j] + (bounds.upper[j] - bounds.lower[j]) * unif(rng);
        }
    }
    return out;
}

Matrix tensor_grid(const Bounds& bounds, Index per_dim) {
    const Index p = bounds.dim();
    Index total = 1;
    for (Index j = 0; j < p; ++j) total *= per_dim;
    Matrix out(total, p);
    for (Index i = 0; i < total; ++i) {
        Index rem = i;
        // first coordinate varies slowest
        for (Index j = p - 1; j >= 0; --j) {
            const Index k = rem % per_dim;
            rem /= per_dim;
            const double u = per_dim > 1 ? static_cast<double>(k) / static_cast<double>(per_dim - 1)
                                         : 0.5;
            out(i, j) = bounds.lower[j] + (bounds.upper[j] - bounds.lower[j]) * u;
        }
    }
    return out;
}

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double standard_normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

}  // namespace eivar
