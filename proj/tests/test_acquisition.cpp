#include "eivar/acquisition.hpp"
#include "eivar/sampling.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace eivar;

namespace {

struct Fixture {
    Dataset data;
    PcgpEmulator emu;
    ObsModel obs;
    Prior prior;
    Matrix candidates;
    Matrix reference;
};

Fixture make_fixture(std::uint64_t seed, Index d, Index n = 10) {
    std::mt19937_64 rng(seed);
    const Bounds b(Vector::Constant(2, -2.0), Vector::Constant(2, 2.0));
    const Matrix x = oracle::random_points(n, 2, rng, -2, 2);
    Matrix y(n, d);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < d; ++k) {
            y(i, k) = x(i, 0) * x(i, 0) + (k + 1.0) * x(i, 1) + 0.3 * k * x(i, 0) * x(i, 1);
        }
    }
    Fixture f{Dataset(x, y), {}, {}, Prior::uniform(b), oracle::random_points(8, 2, rng, -2, 2),
              oracle::random_points(40, 2, rng, -2, 2)};
    EmulatorFitOptions o;
    o.q_policy.q = std::min<Index>(d, 2);
    o.fixed = true;
    for (Index j = 0; j < *o.q_policy.q; ++j) {
        KernelParams kp;
        kp.log_scale = 0.5 + 0.2 * j;
        kp.log_lengthscales = Vector::Constant(2, -0.3 + 0.1 * j);
        kp.log_nugget = std::log(1e-6);
        o.init.push_back(kp);
    }
    f.emu = emu_fit(f.data, o);
    f.obs = ObsModel(Vector::Constant(d, 1.0), oracle::random_spd(d, rng, 0.5, 2.0));
    return f;
}

// Dense GP posterior covariance between two points.
double post_cov(const GpState& g, const Vector& a, const Vector& b) {
    const Matrix k = oracle::gram(g.train_inputs, g.params, true);
    Vector ka(g.size()), kb(g.size());
    for (Index i = 0; i < g.size(); ++i) {
        ka(i) = oracle::kernel(g.train_inputs.row(i).transpose(), a, g.params);
        kb(i) = oracle::kernel(g.train_inputs.row(i).transpose(), b, g.params);
    }
    return oracle::kernel(a, b, g.params) - ka.dot(k.fullPivLu().solve(kb));
}

double dense_eivar(const Fixture& f, const Vector& star) {
    const Index d = f.obs.dim();
    const Matrix& sigma = f.obs.sigma();
    const double norm = std::pow(2.0, d) * std::pow(M_PI, d / 2.0);
    const Matrix load = f.emu.scale.asDiagonal() * f.emu.basis;
    double acc = 0.0;
    for (Index r = 0; r < f.reference.rows(); ++r) {
        const Vector t = f.reference.row(r).transpose();
        const EmulatorPrediction pr = emu_predict(f.emu, t);
        Vector c(f.emu.q()), tau(f.emu.q());
        for (Index j = 0; j < f.emu.q(); ++j) {
            const GpState& g = f.emu.gps[j];
            c(j) = post_cov(g, t, t);
            const double cs = post_cov(g, t, star);
            tau(j) = std::min(cs * cs / (post_cov(g, star, star) + g.params.nugget()), c(j));
        }
        const Matrix s = load * c.asDiagonal() * load.transpose();
        const Matrix phi = load * tau.asDiagonal() * load.transpose();
        const double p = f.prior.density(t);
        const double first = oracle::mvn_pdf(f.obs.data(), pr.mean, 0.5 * sigma + s) /
                             (norm * std::sqrt(sigma.determinant()));
        const double second = oracle::mvn_pdf(f.obs.data(), pr.mean, 0.5 * (sigma + s + phi)) /
                              (norm * std::sqrt((sigma + s - phi).determinant()));
        acc += std::max(p * p * (first - second), 0.0);
    }
    return acc / static_cast<double>(f.reference.rows());
}

}  // namespace

TEST_CASE("acquisition names round trip") {
    for (auto k : {AcquisitionKind::EIVAR, AcquisitionKind::MAXVAR, AcquisitionKind::MAXEXP,
                   AcquisitionKind::EI, AcquisitionKind::IMSE, AcquisitionKind::RND}) {
        CHECK(parse_acquisition(to_string(k)) == k);
    }
    CHECK_THROWS_AS((void)parse_acquisition("eivar2"), ConfigInvalid);
}

TEST_CASE("EIVAR scores match the dense closed form") {
    for (Index d : {1, 2, 3}) {
        const Fixture f = make_fixture(30 + d, d);
        const AcquisitionContext ctx{f.emu, f.obs, f.prior, f.candidates, f.reference, f.data};
        const Vector s = eivar_scores(ctx);
        for (Index i = 0; i < f.candidates.rows(); ++i) {
            const double ref = dense_eivar(f, f.candidates.row(i).transpose());
            CHECK(std::fabs(s(i) - ref) <= 1e-7 * std::fabs(ref) + 1e-300);
            CHECK(eivar_score(ctx, i) == s(i));
        }
    }
}

TEST_CASE("EIVAR never exceeds the current integrated variance") {
    const Fixture f = make_fixture(41, 2);
    const AcquisitionContext ctx{f.emu, f.obs, f.prior, f.candidates, f.reference, f.data};
    const EivarEvaluator ev(ctx);
    for (Index i = 0; i < f.candidates.rows(); ++i) {
        CHECK(ev.score(i) >= 0.0);
        CHECK(ev.score(i) <= ev.current_integrated_variance() * (1 + 1e-9));
    }
    // A probe at an existing design point barely changes the emulator.
    Matrix at_data = f.data.params.topRows(1);
    const AcquisitionContext c2{f.emu, f.obs, f.prior, at_data, f.reference, f.data};
    CHECK(eivar_scores(c2)(0) == doctest::Approx(ev.current_integrated_variance()).epsilon(1e-4));
}

TEST_CASE("MAXVAR and MAXEXP against direct formulas") {
    const Fixture f = make_fixture(42, 2);
    const AcquisitionContext ctx{f.emu, f.obs, f.prior, f.candidates, f.reference, f.data};
    const Vector mv = maxvar_scores(ctx);
    const Vector me = maxexp_scores(ctx);
    const Bounds& b = f.prior.bounds();
    for (Index i = 0; i < f.candidates.rows(); ++i) {
        const Vector t = f.candidates.row(i).transpose();
        const EmulatorPrediction pr = emu_predict(f.emu, t);
        const PosteriorMoments m = post_mean_var_dense(pr.mean, pr.covariance(), f.obs, f.prior.density(t));
        CHECK(mv(i) == doctest::Approx(m.var).epsilon(1e-8));
        CHECK(maxvar_score(ctx, i) == doctest::Approx(m.var).epsilon(1e-8));
        double dmin = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < f.data.size(); ++j) {
            const Vector u = ((f.data.params.row(j).transpose() - t).array() / b.width().array()).matrix();
            dmin = std::min(dmin, u.norm());
        }
        CHECK(me(i) == doctest::Approx(m.mean * dmin).epsilon(1e-8));
    }
    // A pending point at a candidate zeroes its MAXEXP score.
    Dataset h = f.data;
    h.pending.push_back(f.candidates.row(3).transpose());
    const AcquisitionContext c2{f.emu, f.obs, f.prior, f.candidates, f.reference, h};
    CHECK(maxexp_score(c2, 3) == 0.0);
    Dataset empty;
    const AcquisitionContext c3{f.emu, f.obs, f.prior, f.candidates, f.reference, empty};
    CHECK_THROWS_AS((void)maxexp_scores(c3), EmptyHistory);
}

TEST_CASE("IMSE is the summed post-acquisition emulator variance") {
    const Fixture f = make_fixture(43, 1);
    const AcquisitionContext ctx{f.emu, f.obs, f.prior, f.candidates, f.reference, f.data};
    const Vector s = imse_scores(ctx);
    const GpState& g = f.emu.gps.front();
    for (Index i = 0; i < f.candidates.rows(); ++i) {
        const Vector star = f.candidates.row(i).transpose();
        Matrix x2(g.size() + 1, 2);
        x2 << g.train_inputs, star.transpose();
        Vector w2(g.size() + 1);
        w2 << g.train_targets, 0.0;
        double total = 0.0;
        for (Index r = 0; r < f.reference.rows(); ++r) {
            total += oracle::predict(x2, w2, g.params, f.reference.row(r).transpose()).var;
        }
        CHECK(s(i) == doctest::Approx(total).epsilon(1e-7));
    }
    const Fixture f2 = make_fixture(44, 2);
    const AcquisitionContext c2{f2.emu, f2.obs, f2.prior, f2.candidates, f2.reference, f2.data};
    CHECK_THROWS_AS((void)imse_scores(c2), UnsupportedDimension);
}

TEST_CASE("expected improvement closed form") {
    CHECK(expected_improvement(1.0, 0.0, 0.5) == 0.5);
    CHECK(expected_improvement(0.1, 0.0, 0.5) == 0.0);
    // mean = best: sd * phi(0)
    CHECK(expected_improvement(2.0, 0.5, 2.0) == doctest::Approx(0.5 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
    // Numerical integration of E[max(X - best, 0)].
    const double mean = 0.3, sd = 0.7, best = 0.8;
    double acc = 0.0;
    const int m = 200000;
    for (int i = 0; i < m; ++i) {
        const double x = mean - 10 * sd + 20 * sd * (i + 0.5) / m;
        acc += std::max(x - best, 0.0) * standard_normal_pdf((x - mean) / sd) / sd * 20 * sd / m;
    }
    CHECK(expected_improvement(mean, sd, best) == doctest::Approx(acc).epsilon(1e-6));
}

TEST_CASE("EI surrogate interpolates the posterior at evaluated points") {
    const Fixture f = make_fixture(45, 2);
    const PosteriorSurrogate s = fit_posterior_surrogate(f.data, f.obs, f.prior, 3);
    double best = 0.0;
    for (Index i = 0; i < f.data.size(); ++i) {
        const double v = std::exp(mvn_logpdf(f.obs.data(), f.data.outputs.row(i).transpose(), f.obs.sigma())) *
                         f.prior.density(f.data.params.row(i).transpose());
        best = std::max(best, v);
    }
    CHECK(s.p_max == doctest::Approx(best).epsilon(1e-12));
    for (Index i = 0; i < f.candidates.rows(); ++i) CHECK(ei_score(s, f.candidates.row(i).transpose()) >= 0.0);
}

TEST_CASE("selection rules") {
    Vector s(5);
    s << 3.0, 1.0, 1.0, std::nan(""), 4.0;
    CHECK(select_from_scores(s, true).index == 1);
    CHECK(select_from_scores(s, false).index == 4);
    Vector lead_nan(3);
    lead_nan << std::nan(""), 2.0, 2.0;
    CHECK(select_from_scores(lead_nan, false).index == 1);
    CHECK_THROWS_AS((void)select_from_scores(Vector(), true), EmptyCandidates);

    const Fixture f = make_fixture(46, 2);
    const AcquisitionContext ctx{f.emu, f.obs, f.prior, f.candidates, f.reference, f.data};
    CHECK(select(ctx, AcquisitionKind::RND, 9).index == select(ctx, AcquisitionKind::RND, 9).index);
    const Selection e = select(ctx, AcquisitionKind::EIVAR, 0);
    const Vector all = eivar_scores(ctx);
    CHECK(e.score == all.minCoeff());
    CHECK(select(ctx, AcquisitionKind::MAXVAR, 0).score == maxvar_scores(ctx).maxCoeff());
    std::vector<Index> hits(8, 0);
    for (std::uint64_t seed = 0; seed < 400; ++seed) ++hits[select(ctx, AcquisitionKind::RND, seed).index];
    for (Index h : hits) CHECK(h > 20);
    Matrix none(0, 2);
    const AcquisitionContext c0{f.emu, f.obs, f.prior, none, f.reference, f.data};
    CHECK_THROWS_AS((void)select(c0, AcquisitionKind::EIVAR, 0), EmptyCandidates);
}
