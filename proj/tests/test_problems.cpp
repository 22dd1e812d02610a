#include "eivar/problems.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace eivar;

namespace {

Vector v(std::initializer_list<double> x) {
    Vector out(static_cast<Index>(x.size()));
    Index i = 0;
    for (double e : x) out(i++) = e;
    return out;
}

ExternalSimulator echo(std::vector<std::string> extra = {}) {
    ExternalSimulator s;
    s.command = {ECHO_SIMULATOR};
    for (auto& e : extra) s.command.push_back(std::move(e));
    s.timeout_seconds = 5.0;
    return s;
}

}  // namespace

TEST_CASE("closed-form simulator values") {
    CHECK(eval_problem("unimodal", v({0, 0}))(0) == 0.0);
    CHECK(eval_problem("unimodal", v({1, 1}))(0) == 3.0);
    CHECK(eval_problem("banana", v({0, 3})) == v({0, 3}));
    CHECK(eval_problem("bimodal", v({2, 4})) == v({0, 2}));
    CHECK(eval_problem("unidentifiable", v({1.5, -2})) == v({1.5, -2}));
    CHECK(eval_problem("3d", Vector::Zero(3)) == Vector::Zero(3));
    // 0.5 t_i^2 + 0.5 t_i * (t_1 + t_2 + t_3) at (1, 2, 3)
    CHECK(eval_problem("3d", v({1, 2, 3})) == v({3.5, 8.0, 13.5}));
    CHECK(eval_problem("sin_toy", v({1.0}))(0) == doctest::Approx(std::sin(1.0) + 0.1));
    CHECK(eval_problem("sin_toy_ei", v({2.0}))(0) == doctest::Approx(std::sin(2.0) + 1.0));
    CHECK_THROWS_AS((void)eval_problem("unimodal", v({5, 0})), OutOfBounds);
    CHECK_THROWS_AS((void)eval_problem("unimodal", v({0, 0, 0})), DimensionMismatch);
    CHECK_THROWS_AS((void)make_problem("nope"), ConfigInvalid);
}

TEST_CASE("true posterior reference values") {
    // N(-6; 0, 4) / 64
    const double f = std::exp(-0.5 * 36.0 / 4.0) / std::sqrt(2.0 * M_PI * 4.0);
    CHECK(true_posterior("unimodal", v({0, 0})) == doctest::Approx(f / 64.0).epsilon(1e-12));
    CHECK(true_posterior("unimodal", v({0, 0})) == doctest::Approx(3.4624e-5).epsilon(1e-4));
    // Banana mode: exponent zero, |Sigma| = 100, prior 1/(40 * 15).
    CHECK(true_posterior("banana", v({0, 3})) ==
          doctest::Approx(1.0 / (2.0 * M_PI * 10.0) / 600.0).epsilon(1e-12));
    const Problem six = make_problem("6d");
    std::mt19937_64 rng(5);
    const double at0 = six.true_posterior(Vector::Zero(6));
    for (int i = 0; i < 20; ++i) {
        CHECK(six.true_posterior(oracle::random_points(1, 6, rng, -4, 4).row(0).transpose()) < at0);
    }
}

TEST_CASE("analytic truth composes the density with the simulator") {
    std::mt19937_64 rng(6);
    for (const auto& name : problem_names()) {
        const Problem pr = make_problem(name);
        const Bounds& b = pr.bounds();
        CHECK(pr.p == b.dim());
        CHECK(pr.obs.dim() == pr.d);
        CHECK(pr.analytic);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 100; ++i) {
            Vector t(pr.p);
            for (Index l = 0; l < pr.p; ++l) t(l) = b.lower(l) + u(rng) * (b.upper(l) - b.lower(l));
            const Vector eta = pr.evaluate(t);
            CHECK(eta.size() == pr.d);
            const double ref = oracle::mvn_pdf(pr.obs.data(), eta, pr.obs.sigma()) * pr.prior.density(t);
            CHECK(std::fabs(pr.true_posterior(t) - ref) <= 1e-10 * std::max(ref, 1e-300) + 1e-300);
        }
    }
}

TEST_CASE("discrepancy toy") {
    const Problem pr = make_problem("discrepancy_toy");
    CHECK(pr.d == 5);
    CHECK(pr.design_points.rows() == 5);
    // sin(0) + b(0) = 1 at x = 0, for any parameter.
    CHECK(pr.evaluate(v({0.3}))(0) + (1.0 - 0.0 / 3.0 - 0.0) == 1.0);
    for (Index i = 0; i < 5; ++i) {
        const double x = pr.design_points(i, 0);
        CHECK(pr.evaluate(v({0.6}))(i) == doctest::Approx(std::sin(6.0 * x)));
    }
    CHECK(pr.obs.sigma()(0, 0) == doctest::Approx(0.04));
}

TEST_CASE("prior sensitivity problem uses a truncated Gaussian prior") {
    ProblemOptions o;
    o.prior_sd = 0.5;
    const Problem pr = make_problem("prior_sensitivity", o);
    CHECK(pr.prior.kind() == Prior::Kind::truncated_gaussian);
    CHECK(pr.prior.density(v({1.5, 1.5})) > pr.prior.density(v({0.0, 0.0})));
    CHECK(pr.evaluate(v({1, 2}))(0) == 5.0);
}

TEST_CASE("reaction-code stand-in") {
    const Problem pr = make_problem("fresco_like");
    CHECK(pr.p == 3);
    CHECK(pr.d == 15);
    CHECK(pr.bounds().lower == v({40, 0.7, 2.5}));
    CHECK(pr.bounds().upper == v({60, 1.2, 4.5}));
    CHECK((pr.obs.sigma() - 0.1 * Matrix::Identity(15, 15)).cwiseAbs().maxCoeff() == 0.0);
    // Data is the stand-in evaluated at its nominal parameters.
    CHECK((pr.evaluate(v({50, 0.95, 3.5})) - pr.obs.data()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pr.design_points.rows() == 15);
    CHECK(pr.runtime.kind() == DurationModel::Kind::lognormal);
}

TEST_CASE("external simulator round trip") {
    CHECK(external_simulate(echo(), v({1, 2, 3}), 7) == v({1, 2, 3}));
    CHECK(external_simulate(echo({"--dim", "4"}), v({1, 2}), 8) == v({1, 2, 0, 0}));
    const Problem pr = make_external_problem("echo", echo(), Bounds(Vector::Zero(2), Vector::Ones(2)),
                                             v({0.2, 0.3}), Matrix::Identity(2, 2));
    CHECK_FALSE(pr.analytic);
    CHECK(pr.evaluate(v({0.25, 0.5})) == v({0.25, 0.5}));
}

TEST_CASE("external simulator failures") {
    CHECK_THROWS_AS((void)external_simulate(echo({"--malformed"}), v({1}), 1), ProtocolViolation);
    CHECK_THROWS_AS((void)external_simulate(echo({"--wrong-id"}), v({1}), 1), ProtocolViolation);
    CHECK_THROWS_AS((void)external_simulate(echo({"--error"}), v({1}), 1), SimulatorFailure);
    CHECK_THROWS_AS((void)external_simulate(echo({"--exit-code", "3"}), v({1}), 1), NonzeroExit);
    ExternalSimulator slow = echo({"--sleep", "5"});
    slow.timeout_seconds = 0.3;
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS((void)external_simulate(slow, v({1}), 1), Timeout);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 3.0);
    ExternalSimulator missing;
    missing.command = {"/nonexistent/simulator"};
    missing.timeout_seconds = 2.0;
    CHECK_THROWS_AS((void)external_simulate(missing, v({1}), 1), SimulatorFailure);
    // Every failure kind is a SimulatorFailure.
    CHECK_THROWS_AS((void)external_simulate(echo({"--malformed"}), v({1}), 1), SimulatorFailure);
}
