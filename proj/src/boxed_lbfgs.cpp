#include "boxed_lbfgs.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace eivar::detail {

namespace {

class SigmoidObjective final : public ceres::FirstOrderFunction {
public:
    SigmoidObjective(const Bounds& box, const BoxedObjective& f) : box_(box), f_(f) {}

    bool Evaluate(const double* u, double* cost, double* gradient) const override {
        const Index m = box_.dim();
        Vector v(m), dv(m);
        for (Index i = 0; i < m; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-u[i]));
            const double width = box_.upper(i) - box_.lower(i);
            v(i) = box_.lower(i) + width * s;
            dv(i) = width * s * (1.0 - s);
        }
        Vector g;
        if (gradient != nullptr) g.resize(m);
        const auto val = f_(v, gradient != nullptr ? &g : nullptr);
        if (!val || !std::isfinite(*val)) return false;
        *cost = -*val;
        if (gradient != nullptr) {
            for (Index i = 0; i < m; ++i) {
                gradient[i] = -g(i) * dv(i);
                if (!std::isfinite(gradient[i])) return false;
            }
        }
        return true;
    }

    int NumParameters() const override { return static_cast<int>(box_.dim()); }

private:
    const Bounds& box_;
    const BoxedObjective& f_;
};

}  // namespace

std::optional<BoxedResult> maximize_in_box(const Bounds& box, const Vector& start,
                                           const BoxedObjective& f, int max_iterations) {
    const Index m = box.dim();
    std::vector<double> u(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        double s = (start(i) - box.lower(i)) / (box.upper(i) - box.lower(i));
        s = std::clamp(s, 1e-6, 1.0 - 1e-6);
        u[static_cast<std::size_t>(i)] = std::log(s / (1.0 - s));
    }
    ceres::GradientProblem problem(new SigmoidObjective(box, f));
    double cost = 0.0;
    if (!problem.Evaluate(u.data(), &cost, nullptr)) return std::nullopt;

    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = max_iterations;
    options.function_tolerance = 1e-12;
    options.gradient_tolerance = 1e-9;
    options.parameter_tolerance = 1e-12;
    options.logging_type = ceres::SILENT;
    options.minimizer_progress_to_stdout = false;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, u.data(), &summary);
    if (!problem.Evaluate(u.data(), &cost, nullptr)) return std::nullopt;

    BoxedResult out;
    out.v.resize(m);
    for (Index i = 0; i < m; ++i) {
        const double s = 1.0 / (1.0 + std::exp(-u[static_cast<std::size_t>(i)]));
        out.v(i) = box.lower(i) + (box.upper(i) - box.lower(i)) * s;
    }
    out.value = -cost;
    return out;
}

std::optional<Vector> central_gradient(const Bounds& box, const Vector& v,
                                       const std::function<std::optional<double>(const Vector&)>& f,
                                       double h) {
    Vector g(v.size());
    for (Index i = 0; i < v.size(); ++i) {
        const double step = h * (1.0 + std::abs(v(i)));
        Vector hi = v, lo = v;
        hi(i) = std::min(v(i) + step, box.upper(i));
        lo(i) = std::max(v(i) - step, box.lower(i));
        const auto fh = f(hi);
        const auto fl = f(lo);
        if (!fh || !fl || hi(i) == lo(i)) return std::nullopt;
        g(i) = (*fh - *fl) / (hi(i) - lo(i));
    }
    return g;
}

}  // namespace eivar::detail
