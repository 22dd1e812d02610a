#include "eivar/posterior.hpp"
#include "eivar/sampling.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace eivar;

namespace {

// Posterior moments from dense densities.
PosteriorMoments dense_moments(const Vector& y, const Vector& mu, const Matrix& sigma,
                               const Matrix& s, double p) {
    const double d = static_cast<double>(y.size());
    const double e = oracle::mvn_pdf(y, mu, sigma + s);
    const double first = oracle::mvn_pdf(y, mu, 0.5 * sigma + s) /
                         (std::pow(2.0, d) * std::pow(M_PI, d / 2.0) *
                          std::sqrt(Eigen::FullPivLU<Matrix>(sigma).determinant()));
    return {p * e, p * p * (first - e * e)};
}

Matrix random_loading(Index d, Index q, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    Matrix f(d, q);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < q; ++j) f(i, j) = 0.7 * n01(rng);
    return f;
}

}  // namespace

TEST_CASE("uniform and truncated Gaussian prior densities") {
    const Bounds b(Vector::Constant(2, -4.0), Vector::Constant(2, 4.0));
    const Prior u = Prior::uniform(b);
    CHECK(u.density(Vector::Zero(2)) == doctest::Approx(1.0 / 64.0).epsilon(1e-14));
    CHECK(u.density(Vector::Constant(2, 5.0)) == 0.0);

    const Bounds b1(Vector::Constant(1, -2.0), Vector::Constant(1, 5.0));
    const Prior g = Prior::truncated_gaussian(b1, Vector::Constant(1, 1.5), Vector::Constant(1, 1.0));
    // Midpoint rule over the support integrates to one.
    const int m = 20000;
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const double x = -2.0 + 7.0 * (i + 0.5) / m;
        total += g.density(Vector::Constant(1, x)) * 7.0 / m;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    const double z = (1.5 - 1.5);
    const double norm = standard_normal_cdf(3.5) - standard_normal_cdf(-3.5);
    CHECK(g.density(Vector::Constant(1, 1.5)) ==
          doctest::Approx(standard_normal_pdf(z) / norm).epsilon(1e-12));
}

TEST_CASE("mvn_logpdf matches the textbook density") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const Index d = 1 + rep % 5;
        const Matrix c = oracle::random_spd(d, rng);
        const Vector x = oracle::random_points(1, d, rng).row(0).transpose();
        const Vector mu = oracle::random_points(1, d, rng).row(0).transpose();
        CHECK(std::exp(mvn_logpdf(x, mu, c)) == doctest::Approx(oracle::mvn_pdf(x, mu, c)).epsilon(1e-12));
    }
    CHECK_THROWS_AS((void)mvn_logpdf(Vector::Zero(2), Vector::Zero(3), Matrix::Identity(2, 2)),
                    DimensionMismatch);
}

TEST_CASE("squared density identity") {
    std::mt19937_64 rng(22);
    for (int rep = 0; rep < 50; ++rep) {
        const Index d = 1 + rep % 4;
        const Matrix m = oracle::random_spd(d, rng, 0.2, 3.0);
        const Vector y = oracle::random_points(1, d, rng, -1, 1).row(0).transpose();
        const Vector mu = oracle::random_points(1, d, rng, -1, 1).row(0).transpose();
        const double dd = static_cast<double>(d);
        const double lhs = std::exp(mvn_logpdf(y, mu, 0.5 * m)) /
                           (std::pow(2.0, dd) * std::pow(M_PI, dd / 2.0) *
                            std::sqrt(m.determinant()));
        const double rhs = std::pow(std::exp(mvn_logpdf(y, mu, m)), 2);
        CHECK(oracle::rel_err(lhs, rhs) < 1e-10);
    }
}

TEST_CASE("moments vanish in variance when the emulator is certain") {
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        const Index d = 1 + rep % 4;
        const ObsModel obs(oracle::random_points(1, d, rng).row(0).transpose(), oracle::random_spd(d, rng));
        const Vector mu = oracle::random_points(1, d, rng).row(0).transpose();
        const PosteriorMoments m = post_mean_var_dense(mu, Matrix::Zero(d, d), obs, 0.3);
        CHECK(m.var == 0.0);
        CHECK(m.mean == doctest::Approx(0.3 * oracle::mvn_pdf(obs.data(), mu, obs.sigma())).epsilon(1e-12));
        const EmulatorPrediction pr{mu, Vector::Zero(2), random_loading(d, 2, rng)};
        CHECK(post_mean_var(pr, obs, 0.3).var == 0.0);
    }
}

TEST_CASE("low-rank and dense moments agree with the closed form") {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> u(0.05, 1.5);
    for (int rep = 0; rep < 30; ++rep) {
        const Index d = 1 + rep % 6;
        const Index q = 1 + rep % std::min<Index>(d, 3);
        const Matrix sigma = oracle::random_spd(d, rng, 0.3, 2.0);
        const ObsModel obs(oracle::random_points(1, d, rng, -1, 1).row(0).transpose(), sigma);
        const Vector mu = oracle::random_points(1, d, rng, -1, 1).row(0).transpose();
        const Matrix f = random_loading(d, q, rng);
        Vector c(q);
        for (Index j = 0; j < q; ++j) c(j) = u(rng);
        const double p = 0.25;
        const Matrix s = f * c.asDiagonal() * f.transpose();
        const PosteriorMoments ref = dense_moments(obs.data(), mu, sigma, s, p);
        const PosteriorMoments low = post_mean_var({mu, c, f}, obs, p);
        const PosteriorMoments dense = post_mean_var_dense(mu, s, obs, p);
        CHECK(oracle::rel_err(low.mean, ref.mean) < 1e-9);
        CHECK(oracle::rel_err(dense.mean, ref.mean) < 1e-9);
        CHECK(std::fabs(low.var - ref.var) <= 1e-8 * std::fabs(ref.var) + 1e-300);
        CHECK(std::fabs(dense.var - ref.var) <= 1e-8 * std::fabs(ref.var) + 1e-300);
        CHECK(low.var >= 0.0);

        // Log densities of a*Sigma + F diag(c) F^T for several a.
        const LowRankGaussian g(obs, f);
        const auto proj = g.project(obs.data() - mu);
        for (double a : {0.5, 1.0, 2.0}) {
            const Matrix cov = a * sigma + s;
            CHECK(std::exp(g.log_density(proj, a, c)) ==
                  doctest::Approx(oracle::mvn_pdf(obs.data(), mu, cov)).epsilon(1e-9));
            CHECK(g.log_det(a, c) == doctest::Approx(std::log(cov.determinant())).epsilon(1e-9));
        }
    }
}

TEST_CASE("moments against Monte Carlo") {
    std::mt19937_64 rng(25);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 4; ++rep) {
        const Index d = 1 + rep % 3;
        const Matrix sigma = oracle::random_spd(d, rng, 0.5, 1.5);
        const Matrix s = oracle::random_spd(d, rng, 0.1, 0.6);
        const ObsModel obs(Vector::Zero(d), sigma);
        const Vector mu = oracle::random_points(1, d, rng, -0.5, 0.5).row(0).transpose();
        const PosteriorMoments m = post_mean_var_dense(mu, s, obs, 1.0);
        const Eigen::LLT<Matrix> ls(s);
        const int draws = 100000;
        double sum = 0.0, sum2 = 0.0;
        for (int k = 0; k < draws; ++k) {
            Vector z(d);
            for (Index i = 0; i < d; ++i) z(i) = n01(rng);
            const double v = oracle::mvn_pdf(obs.data(), mu + ls.matrixL() * z, sigma);
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / draws;
        const double var = sum2 / draws - mean * mean;
        CHECK(std::fabs(mean - m.mean) < 4.0 * std::sqrt(var / draws));
        CHECK(var == doctest::Approx(m.var).epsilon(0.05));
    }
}

TEST_CASE("variance_from_logs") {
    CHECK(variance_from_logs(std::log(0.5), std::log(0.5)) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(variance_from_logs(std::log(0.2), std::log(0.5)) == 0.0);
    CHECK(variance_from_logs(-std::numeric_limits<double>::infinity(), std::log(0.1)) == 0.0);
    // Resolves a variance far below the squared mean.
    const double lb = std::log(1e-3);
    const double la = 2.0 * lb + 1e-9;
    CHECK(variance_from_logs(la, lb) == doctest::Approx(1e-6 * 1e-9).epsilon(1e-5));
}

TEST_CASE("observation jitter only when needed") {
    const ObsModel ok(Vector::Zero(2), Matrix::Identity(2, 2));
    CHECK(ok.jitter() == 0.0);
    Matrix singular(2, 2);
    singular << 1.0, 1.0, 1.0, 1.0;
    const ObsModel fixed(Vector::Zero(2), singular);
    CHECK(fixed.jitter() > 0.0);
    CHECK(Eigen::LLT<Matrix>(fixed.effective_sigma()).info() == Eigen::Success);
    CHECK_THROWS_AS(ObsModel(Vector::Zero(2), Matrix::Identity(3, 3)), DimensionMismatch);
}

TEST_CASE("ancillary likelihood matches the dense formula") {
    std::mt19937_64 rng(26);
    const Index d = 6;
    Matrix x(12, 1);
    Matrix y(12, d);
    for (Index i = 0; i < 12; ++i) {
        x(i, 0) = i / 11.0;
        for (Index k = 0; k < d; ++k) y(i, k) = std::sin((k + 1) * x(i, 0)) + 0.2 * k;
    }
    const PcgpEmulator emu = emu_fit(Dataset(x, y));
    AncillaryParams a;
    a.sigma_eps_sq = 0.3;
    a.sigma_b_sq = 0.7;
    a.lambda = 2.0;
    a.design_points = Matrix(d, 1);
    for (Index k = 0; k < d; ++k) a.design_points(k, 0) = 0.2 * k;
    Matrix se(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            se(i, j) = (i == j ? 0.3 : 0.0) + 0.7 * std::exp(-2.0 * std::fabs(0.2 * i - 0.2 * j));
    CHECK((a.covariance() - se).cwiseAbs().maxCoeff() < 1e-14);

    const Vector obs = Vector::Constant(d, 0.5);
    const Vector theta = Vector::Constant(1, 0.37);
    const EmulatorPrediction pr = emu_predict(emu, theta);
    const Matrix m = se + pr.covariance();
    const Vector r = obs - pr.mean;
    const double ref = -0.5 * std::log(m.determinant()) - 0.5 * r.dot(m.fullPivLu().solve(r));
    CHECK(ancillary_log_likelihood(emu, obs, a, theta) == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("ancillary fit is no worse than a grid over sigma_eps") {
    const Index d = 8;
    Matrix x(10, 1), y(10, d);
    for (Index i = 0; i < 10; ++i) {
        x(i, 0) = i / 9.0;
        for (Index k = 0; k < d; ++k) y(i, k) = std::cos((k + 1) * x(i, 0));
    }
    const PcgpEmulator emu = emu_fit(Dataset(x, y));
    std::mt19937_64 rng(27);
    std::normal_distribution<double> n01;
    Vector obs = emu_predict(emu, Vector::Constant(1, 0.4)).mean;
    for (Index k = 0; k < d; ++k) obs(k) += 0.5 * n01(rng);
    Matrix xd(d, 1);
    for (Index k = 0; k < d; ++k) xd(k, 0) = k;
    AncillaryOptions o;
    o.fix_sigma_b_zero = true;
    const Bounds tb(Vector::Zero(1), Vector::Ones(1));
    const AncillaryFit fit = fit_ancillary(emu, obs, xd, tb, o, 5);
    CHECK(fit.params.sigma_b_sq == 0.0);
    CHECK(tb.contains(fit.theta_hat));
    AncillaryParams a;
    a.design_points = xd;
    a.sigma_b_sq = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 200; ++i) {
        a.sigma_eps_sq = std::exp(std::log(1e-3) + i * (std::log(10.0) - std::log(1e-3)) / 200.0);
        best = std::max(best, ancillary_log_likelihood(emu, obs, a, fit.theta_hat));
    }
    CHECK(fit.log_likelihood >= best - 1e-6);
}
