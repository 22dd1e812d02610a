#include "eivar/posterior.hpp"
#include "eivar/sampling.hpp"

#include "boxed_lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eivar {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kLogPi = 1.1447298858494002;
constexpr double kLog2 = 0.6931471805599453;

double log_det_from(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

Prior Prior::uniform(Bounds bounds) {
    Prior p;
    p.kind_ = Kind::uniform_box;
    p.log_norm_ = std::log(bounds.volume());
    p.bounds_ = std::move(bounds);
    return p;
}

Prior Prior::truncated_gaussian(Bounds bounds, Vector mean, Vector sd) {
    if (mean.size() != bounds.dim() || sd.size() != bounds.dim()) {
        throw DimensionMismatch("prior: mean and sd must match the bounds dimension");
    }
    if ((sd.array() <= 0.0).any()) throw DimensionMismatch("prior: sd must be positive");
    Prior p;
    p.kind_ = Kind::truncated_gaussian;
    double log_norm = 0.0;
    for (Index l = 0; l < bounds.dim(); ++l) {
        const double a = (bounds.lower(l) - mean(l)) / sd(l);
        const double b = (bounds.upper(l) - mean(l)) / sd(l);
        log_norm += std::log(sd(l)) + std::log(standard_normal_cdf(b) - standard_normal_cdf(a));
    }
    p.log_norm_ = log_norm;
    p.bounds_ = std::move(bounds);
    p.mean_ = std::move(mean);
    p.sd_ = std::move(sd);
    return p;
}

double Prior::density(const Vector& theta) const {
    if (!bounds_.contains(theta)) return 0.0;
    if (kind_ == Kind::uniform_box) return std::exp(-log_norm_);
    const Vector z = ((theta - mean_).array() / sd_.array()).matrix();
    const double d = static_cast<double>(theta.size());
    return std::exp(-0.5 * z.squaredNorm() - 0.5 * d * kLog2Pi - log_norm_);
}

JitteredCholesky cholesky_with_jitter(const Matrix& m) {
    JitteredCholesky out;
    out.llt.compute(m);
    if (out.llt.info() == Eigen::Success && m.allFinite()) return out;
    double base = m.diagonal().mean();
    if (!(base > 0.0)) base = 1.0;
    for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
        Matrix mj = m;
        mj.diagonal().array() += rel * base;
        out.llt.compute(mj);
        if (out.llt.info() == Eigen::Success) {
            out.jitter = rel * base;
            return out;
        }
    }
    throw NotPositiveDefinite("covariance not positive definite after jitter escalation");
}

ObsModel::ObsModel(Vector data, Matrix sigma) : data_(std::move(data)), sigma_(std::move(sigma)) {
    if (sigma_.rows() != data_.size() || sigma_.cols() != data_.size()) {
        throw DimensionMismatch("observation: Sigma must be d x d");
    }
    jitter_ = cholesky_with_jitter(sigma_).jitter;
}

Matrix ObsModel::effective_sigma() const {
    Matrix s = sigma_;
    s.diagonal().array() += jitter_;
    return s;
}

double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
    if (x.size() != mean.size() || cov.rows() != x.size() || cov.cols() != x.size()) {
        throw DimensionMismatch("mvn_logpdf: dimension mismatch");
    }
    const JitteredCholesky c = cholesky_with_jitter(cov);
    const Vector z = c.llt.matrixL().solve(x - mean);
    return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det_from(c.llt) + z.squaredNorm());
}

double variance_from_logs(double log_first, double log_mean) {
    const double log_second = 2.0 * log_mean;
    if (!std::isfinite(log_first) || log_first <= log_second) return 0.0;
    return -std::exp(log_first) * std::expm1(log_second - log_first);
}

PosteriorMoments post_mean_var_dense(const Vector& mu, const Matrix& s, const ObsModel& obs,
                                     double prior_density) {
    if (prior_density <= 0.0) return {};
    const Index d = obs.dim();
    const Matrix sigma = obs.effective_sigma();
    const double lp = std::log(prior_density);
    const double log_n1 = mvn_logpdf(obs.data(), mu, sigma + s);
    PosteriorMoments out;
    out.mean = std::exp(log_n1 + lp);
    if ((s.array() == 0.0).all()) return out;
    const double log_det_sigma = log_det_from(cholesky_with_jitter(sigma).llt);
    const double log_a = -static_cast<double>(d) * kLog2 - 0.5 * static_cast<double>(d) * kLogPi -
                         0.5 * log_det_sigma + mvn_logpdf(obs.data(), mu, 0.5 * sigma + s);
    out.var = variance_from_logs(log_a + 2.0 * lp, log_n1 + lp);
    return out;
}

LowRankGaussian::LowRankGaussian(const ObsModel& obs, const Matrix& loading)
    : d_(obs.dim()) {
    if (loading.rows() != d_) throw DimensionMismatch("low-rank gaussian: loading rows");
    const JitteredCholesky c = cholesky_with_jitter(obs.effective_sigma());
    sigma_llt_ = c.llt;
    log_det_sigma_ = log_det_from(sigma_llt_);
    sigma_inv_f_ = sigma_llt_.solve(loading);
    gram_ = loading.transpose() * sigma_inv_f_;
    gram_ = 0.5 * (gram_ + gram_.transpose());
}

LowRankGaussian::Projected LowRankGaussian::project(const Vector& residual) const {
    Projected p;
    p.u = sigma_inv_f_.transpose() * residual;
    p.mahal = residual.dot(sigma_llt_.solve(residual));
    return p;
}

LowRankGaussian::Inner LowRankGaussian::inner(const Vector* u, double a,
                                              const Vector& latent) const {
    const Index q = gram_.rows();
    Inner out;
    if (q == 1) {
        const double c = std::max(latent(0), 0.0);
        const double m = a + c * gram_(0, 0);
        out.log_det = std::log(m);
        if (u != nullptr) out.quad = c * (*u)(0) * (*u)(0) / m;
        return out;
    }
    const Vector e = latent.array().max(0.0).sqrt().matrix();
    Matrix m = e.asDiagonal() * gram_ * e.asDiagonal();
    m.diagonal().array() += a;
    const Eigen::LLT<Matrix> llt(m);
    out.log_det = log_det_from(llt);
    if (u != nullptr) {
        const Vector t = e.cwiseProduct(*u);
        out.quad = t.dot(llt.solve(t));
    }
    return out;
}

double LowRankGaussian::log_det(double a, const Vector& latent) const {
    const double q = static_cast<double>(gram_.rows());
    return static_cast<double>(d_) * std::log(a) + log_det_sigma_ + inner(nullptr, a, latent).log_det -
           q * std::log(a);
}

double LowRankGaussian::log_density(const Projected& r, double a, const Vector& latent) const {
    const double q = static_cast<double>(gram_.rows());
    const Inner in = inner(&r.u, a, latent);
    const double ld = static_cast<double>(d_) * std::log(a) + log_det_sigma_ + in.log_det -
                      q * std::log(a);
    const double quad = std::max(r.mahal - in.quad, 0.0) / a;
    return -0.5 * (static_cast<double>(d_) * kLog2Pi + ld + quad);
}

PosteriorMoments LowRankGaussian::moments(const Projected& r, const Vector& latent,
                                          double prior_density) const {
    if (prior_density <= 0.0) return {};
    const double lp = std::log(prior_density);
    const double log_n1 = log_density(r, 1.0, latent);
    PosteriorMoments out;
    out.mean = std::exp(log_n1 + lp);
    if ((latent.array() <= 0.0).all()) return out;
    const double d = static_cast<double>(d_);
    const double log_a = -d * kLog2 - 0.5 * d * kLogPi - 0.5 * log_det_sigma_ +
                         log_density(r, 0.5, latent);
    out.var = variance_from_logs(log_a + 2.0 * lp, log_n1 + lp);
    return out;
}

PosteriorMoments post_mean_var(const EmulatorPrediction& pred, const ObsModel& obs,
                               double prior_density) {
    if (pred.mean.size() != obs.dim()) throw DimensionMismatch("posterior: output dimension");
    const LowRankGaussian g(obs, pred.loading);
    return g.moments(g.project(obs.data() - pred.mean), pred.latent_vars, prior_density);
}

Matrix AncillaryParams::covariance() const {
    const Index d = design_points.rows();
    Matrix out(d, d);
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j < d; ++j) {
            const double dist = (design_points.row(i) - design_points.row(j)).norm();
            out(i, j) = sigma_b_sq * std::exp(-lambda * dist);
        }
    }
    out.diagonal().array() += sigma_eps_sq;
    return out;
}

double ancillary_log_likelihood(const PcgpEmulator& emu, const Vector& y,
                                const AncillaryParams& params, const Vector& theta) {
    const EmulatorPrediction pred = emu_predict(emu, theta);
    const Matrix m = params.covariance() + pred.covariance();
    const JitteredCholesky c = cholesky_with_jitter(m);
    const Vector z = c.llt.matrixL().solve(y - pred.mean);
    return -0.5 * log_det_from(c.llt) - 0.5 * z.squaredNorm();
}

AncillaryFit fit_ancillary(const PcgpEmulator& emu, const Vector& y, const Matrix& design_points,
                           const Bounds& theta_bounds, const AncillaryOptions& options,
                           std::uint64_t seed) {
    if (y.size() != emu.output_dim() || design_points.rows() != y.size()) {
        throw DimensionMismatch("ancillary: data and design points must have d rows");
    }
    const Index p = theta_bounds.dim();
    const bool full = !options.fix_sigma_b_zero;
    const Index extra = full ? 3 : 1;
    // v = (log sigma_eps^2, [sigma_b^2, log lambda], theta)
    Vector lo(extra + p), hi(extra + p);
    lo(0) = std::log(options.sigma_eps_sq_min);
    hi(0) = std::log(options.sigma_eps_sq_max);
    if (full) {
        lo(1) = options.sigma_b_sq_min;
        hi(1) = options.sigma_b_sq_max;
        lo(2) = std::log(options.lambda_min);
        hi(2) = std::log(options.lambda_max);
    }
    lo.tail(p) = theta_bounds.lower;
    hi.tail(p) = theta_bounds.upper;
    const Bounds box(lo, hi);

    auto unpack = [&](const Vector& v) {
        AncillaryParams a;
        a.design_points = design_points;
        a.sigma_eps_sq = std::exp(v(0));
        if (full) {
            a.sigma_b_sq = v(1);
            a.lambda = std::exp(v(2));
        } else {
            a.sigma_b_sq = 0.0;
            a.lambda = 1.0;
        }
        return a;
    };
    const std::function<std::optional<double>(const Vector&)> value =
        [&](const Vector& v) -> std::optional<double> {
        try {
            return ancillary_log_likelihood(emu, y, unpack(v), v.tail(p));
        } catch (const NumericalError&) {
            return std::nullopt;
        }
    };
    const detail::BoxedObjective objective = [&](const Vector& v,
                                                 Vector* grad) -> std::optional<double> {
        const auto f = value(v);
        if (!f) return std::nullopt;
        if (grad != nullptr) {
            const auto g = detail::central_gradient(box, v, value);
            if (!g) return std::nullopt;
            *grad = *g;
        }
        return f;
    };

    Rng rng(seed);
    const Matrix starts = latin_hypercube(box, std::max(1, options.starts), rng);
    std::optional<detail::BoxedResult> best;
    for (Index s = 0; s < starts.rows(); ++s) {
        const auto res = detail::maximize_in_box(box, starts.row(s).transpose(), objective,
                                                 options.max_iterations);
        if (res && (!best || res->value > best->value)) best = res;
    }
    if (!best) throw OptimFailure("ancillary: every start failed to factorize");
    AncillaryFit out;
    out.params = unpack(best->v);
    out.theta_hat = best->v.tail(p);
    out.log_likelihood = best->value;
    return out;
}

}  // namespace eivar
