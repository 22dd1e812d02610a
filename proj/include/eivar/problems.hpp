#ifndef EIVAR_PROBLEMS_HPP
#define EIVAR_PROBLEMS_HPP

#include "eivar/common.hpp"
#include "eivar/posterior.hpp"
#include "eivar/scheduler.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eivar {

/// A calibration problem: simulator, observed data, noise model and prior.
struct Problem {
    std::string name;
    Index p = 0;
    Index d = 0;
    ObsModel obs;
    Prior prior;
    std::function<Vector(const Vector&)> simulate;
    bool analytic = true;
    /// Runtime law used by the simulated-clock scheduler.
    DurationModel runtime = DurationModel::constant(1.0);
    /// Input locations x_i of the output coordinates, d x dx; empty when not meaningful.
    Matrix design_points;
    /// Default initial design size used when a configuration does not set one.
    Index default_n0 = 10;

    [[nodiscard]] const Bounds& bounds() const { return prior.bounds(); }
    /// Simulator output; throws OutOfBounds outside the prior support.
    [[nodiscard]] Vector evaluate(const Vector& theta) const;
    /// Likelihood times prior at theta.
    [[nodiscard]] double true_posterior(const Vector& theta) const;
};

/// Options for problems that take parameters.
struct ProblemOptions {
    double prior_sd = 1.0;  // prior_sensitivity: truncated-Gaussian sd per coordinate
};

[[nodiscard]] std::vector<std::string> problem_names();
[[nodiscard]] Problem make_problem(const std::string& name, const ProblemOptions& options = {});

[[nodiscard]] Vector eval_problem(const std::string& name, const Vector& theta);
[[nodiscard]] double true_posterior(const std::string& name, const Vector& theta);

/// Constants of the damped-sinusoid stand-in for the reaction-code example.
struct DampedSinusoidModel {
    std::vector<double> angles_deg{26, 31, 41, 51, 61, 71, 76, 81, 91, 101, 111, 121, 131, 141, 151};
    double offset = 2.5;
    double slope = -1.2;
    double amp1 = 1.5, damp1 = 0.35, freq1 = 0.08, phase1 = 0.0;
    double amp2 = 0.5, damp2 = 0.2, freq2_r = 3.0, freq2_v = 0.02, phase2 = 0.3;
    std::vector<double> theta_star{50.0, 0.95, 3.5};

    /// theta = (V, r, W_s).
    [[nodiscard]] Vector operator()(const Vector& theta) const;
};

/// Child-process simulator speaking one JSON object per line over stdin/stdout.
struct ExternalSimulator {
    std::vector<std::string> command;
    double timeout_seconds = 60.0;
};

/// One request/response exchange with a fresh child process.
[[nodiscard]] Vector external_simulate(const ExternalSimulator& sim, const Vector& theta,
                                       Index request_id = 0);

/// Problem whose simulator is an external process; no analytic truth.
[[nodiscard]] Problem make_external_problem(const std::string& name, ExternalSimulator sim,
                                            Bounds bounds, Vector y, Matrix sigma);

}  // namespace eivar

#endif
