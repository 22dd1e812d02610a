#include "eivar/problems.hpp"
#include "eivar/sampling.hpp"

#include <cmath>
#include <map>

namespace eivar {

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

Bounds box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    return Bounds(vec(lo), vec(hi));
}

Bounds cube(Index p, double lo, double hi) {
    return Bounds(Vector::Constant(p, lo), Vector::Constant(p, hi));
}

// eta_i = 0.5 theta_i^2 + 0.5 theta_i * sum_j theta_j
Vector coupled_quadratic(const Vector& t) {
    const double s = t.sum();
    return (0.5 * t.array().square() + 0.5 * t.array() * s).matrix();
}

Problem basic(std::string name, Bounds bounds, Vector y, Matrix sigma,
              std::function<Vector(const Vector&)> f, Index n0) {
    Problem pr;
    pr.name = std::move(name);
    pr.p = bounds.dim();
    pr.d = y.size();
    pr.obs = ObsModel(std::move(y), std::move(sigma));
    pr.prior = Prior::uniform(std::move(bounds));
    pr.simulate = std::move(f);
    pr.default_n0 = n0;
    return pr;
}

Matrix diag(std::initializer_list<double> v) { return vec(v).asDiagonal(); }

double bias(double x) { return 1.0 - x / 3.0 - 2.0 * x * x / 3.0; }

}  // namespace

Vector DampedSinusoidModel::operator()(const Vector& theta) const {
    const double v = theta(0), r = theta(1), w = theta(2);
    Vector out(static_cast<Index>(angles_deg.size()));
    for (std::size_t i = 0; i < angles_deg.size(); ++i) {
        const double u = angles_deg[i] * M_PI / 180.0;
        const double w1 = freq1 * v * r;
        const double w2 = freq2_r * r + freq2_v * v;
        out(static_cast<Index>(i)) = offset + slope * u +
                                     amp1 * std::exp(-damp1 * w * u) * std::cos(w1 * u + phase1) +
                                     amp2 * std::exp(-damp2 * w * u) * std::sin(w2 * u + phase2);
    }
    return out;
}

Vector Problem::evaluate(const Vector& theta) const {
    const Bounds& b = bounds();
    if (theta.size() != p) throw DimensionMismatch("problem " + name + ": parameter dimension");
    for (Index i = 0; i < p; ++i) {
        const double slack = 1e-9 * (b.upper(i) - b.lower(i));
        if (!(theta(i) >= b.lower(i) - slack && theta(i) <= b.upper(i) + slack)) {
            throw OutOfBounds("problem " + name + ": parameter outside the prior support");
        }
    }
    return simulate(theta);
}

double Problem::true_posterior(const Vector& theta) const {
    const Vector eta = evaluate(theta);
    return std::exp(mvn_logpdf(obs.data(), eta, obs.effective_sigma())) * prior.density(theta);
}

std::vector<std::string> problem_names() {
    return {"banana", "bimodal",   "unimodal", "unidentifiable",  "3d",
            "6d",     "10d",       "sin_toy",  "sin_toy_ei",      "discrepancy_toy",
            "prior_sensitivity",   "fresco_like"};
}

Problem make_problem(const std::string& name, const ProblemOptions& options) {
    if (name == "banana") {
        return basic(name, box({-20, -10}, {20, 5}), vec({0, 3}), diag({100, 1}),
                     [](const Vector& t) { return vec({t(0), t(1) + 0.03 * t(0) * t(0)}); }, 10);
    }
    if (name == "bimodal") {
        return basic(name, box({-6, -4}, {6, 8}), vec({0, 2}),
                     diag({1.0 / std::sqrt(0.2), 1.0 / std::sqrt(0.75)}),
                     [](const Vector& t) { return vec({t(1) - t(0) * t(0), t(1) - t(0)}); }, 10);
    }
    if (name == "unimodal") {
        return basic(name, cube(2, -4, 4), vec({-6}), diag({4}), [](const Vector& t) {
            return vec({t(0) * t(0) + t(0) * t(1) + t(1) * t(1)});
        }, 10);
    }
    if (name == "unidentifiable") {
        return basic(name, cube(2, -8, 8), vec({0, 0}), diag({100, 1}),
                     [](const Vector& t) { return vec({t(0), t(1)}); }, 10);
    }
    if (name == "3d") {
        return basic(name, cube(3, -4, 4), Vector::Zero(3), 0.5 * Matrix::Identity(3, 3),
                     coupled_quadratic, 20);
    }
    if (name == "6d") {
        return basic(name, cube(6, -4, 4), Vector::Zero(6), 0.5 * Matrix::Identity(6, 6),
                     coupled_quadratic, 40);
    }
    if (name == "10d") {
        return basic(name, cube(10, -2, 2), Vector::Zero(10), 0.25 * Matrix::Identity(10, 10),
                     coupled_quadratic, 60);
    }
    if (name == "sin_toy") {
        return basic(name, cube(1, -10, 10), vec({0}), diag({1}),
                     [](const Vector& t) { return vec({std::sin(t(0)) + 0.1 * t(0)}); }, 12);
    }
    if (name == "sin_toy_ei") {
        return basic(name, cube(1, -10, 10), vec({-5}), diag({1}),
                     [](const Vector& t) { return vec({std::sin(t(0)) + 0.5 * t(0)}); }, 5);
    }
    if (name == "discrepancy_toy") {
        const Vector x = vec({0.0, 0.25, 0.5, 0.75, 1.0});
        const double theta_true = M_PI / 5.0;
        const double sd = 0.2;
        Rng rng(20240601);
        std::normal_distribution<double> noise(0.0, sd);
        Vector y(x.size());
        for (Index i = 0; i < x.size(); ++i) {
            y(i) = std::sin(10.0 * x(i) * theta_true) + bias(x(i)) + noise(rng);
        }
        Problem pr = basic(name, cube(1, 0, 1), y, sd * sd * Matrix::Identity(5, 5),
                           [x](const Vector& t) {
                               return (10.0 * x.array() * t(0)).sin().matrix().eval();
                           }, 10);
        pr.design_points = x;
        return pr;
    }
    if (name == "prior_sensitivity") {
        Problem pr = basic(name, cube(2, -2, 5), vec({0}), diag({2}), [](const Vector& t) {
            return vec({t(0) * t(0) + t(1) * t(1)});
        }, 10);
        pr.prior = Prior::truncated_gaussian(cube(2, -2, 5), Vector::Constant(2, 1.5),
                                             Vector::Constant(2, options.prior_sd));
        return pr;
    }
    if (name == "fresco_like") {
        const DampedSinusoidModel model;
        Vector star(3);
        star << model.theta_star[0], model.theta_star[1], model.theta_star[2];
        Problem pr = basic(name, box({40, 0.7, 2.5}, {60, 1.2, 4.5}), model(star),
                           0.1 * Matrix::Identity(15, 15), model, 32);
        pr.runtime = DurationModel::lognormal(0.0, 0.5, 7);
        Matrix x(15, 1);
        for (Index i = 0; i < 15; ++i) x(i, 0) = model.angles_deg[static_cast<std::size_t>(i)];
        pr.design_points = x;
        return pr;
    }
    throw ConfigInvalid("unknown problem '" + name + "'");
}

Vector eval_problem(const std::string& name, const Vector& theta) {
    return make_problem(name).evaluate(theta);
}

double true_posterior(const std::string& name, const Vector& theta) {
    return make_problem(name).true_posterior(theta);
}

Problem make_external_problem(const std::string& name, ExternalSimulator sim, Bounds bounds,
                              Vector y, Matrix sigma) {
    const Index d = y.size();
    Problem pr = basic(name, std::move(bounds), std::move(y), std::move(sigma),
                       [sim, d](const Vector& t) {
                           Vector eta = external_simulate(sim, t);
                           if (eta.size() != d) {
                               throw ProtocolViolation("external simulator: eta has length " +
                                                       std::to_string(eta.size()) + ", expected " +
                                                       std::to_string(d));
                           }
                           return eta;
                       }, 10);
    pr.analytic = false;
    return pr;
}

}  // namespace eivar
