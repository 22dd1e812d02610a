#include "eivar/acquisition.hpp"
#include "eivar/sampling.hpp"

#include <cmath>
#include <limits>

namespace eivar {

namespace {

constexpr double kLog2 = 0.6931471805599453;
constexpr double kLogPi = 1.1447298858494002;

// log of 2^d pi^{d/2}
double log_norm_const(Index d) {
    const double dd = static_cast<double>(d);
    return dd * kLog2 + 0.5 * dd * kLogPi;
}

Vector prior_densities(const Prior& prior, const Matrix& pts) {
    Vector out(pts.rows());
    for (Index i = 0; i < pts.rows(); ++i) out(i) = prior.density(pts.row(i).transpose());
    return out;
}

}  // namespace

std::string to_string(AcquisitionKind kind) {
    switch (kind) {
        case AcquisitionKind::EIVAR: return "EIVAR";
        case AcquisitionKind::MAXVAR: return "MAXVAR";
        case AcquisitionKind::MAXEXP: return "MAXEXP";
        case AcquisitionKind::EI: return "EI";
        case AcquisitionKind::IMSE: return "IMSE";
        case AcquisitionKind::RND: return "RND";
    }
    return "?";
}

AcquisitionKind parse_acquisition(std::string_view name) {
    for (auto k : {AcquisitionKind::EIVAR, AcquisitionKind::MAXVAR, AcquisitionKind::MAXEXP,
                   AcquisitionKind::EI, AcquisitionKind::IMSE, AcquisitionKind::RND}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigInvalid("unknown acquisition '" + std::string(name) + "'");
}

EivarEvaluator::EivarEvaluator(const AcquisitionContext& ctx)
    : ctx_(ctx), gauss_(ctx.obs, ctx.emulator.loading()) {
    const Index r = ctx.reference.rows();
    const Index d = ctx.obs.dim();
    const EmulatorBatchPrediction pred = emu_predict_batch(ctx.emulator, ctx.reference);
    latent_var_ = pred.latent_vars;
    prior_sq_ = prior_densities(ctx.prior, ctx.reference).array().square().matrix();
    proj_.reserve(static_cast<std::size_t>(r));
    first_term_ = Vector::Zero(r);
    const double lc = log_norm_const(d) + 0.5 * gauss_.log_det_sigma();
    double acc = 0.0;
    for (Index i = 0; i < r; ++i) {
        proj_.push_back(gauss_.project(ctx.obs.data() - pred.mean.row(i).transpose()));
        if (prior_sq_(i) <= 0.0) continue;
        const Vector c = latent_var_.row(i).transpose();
        first_term_(i) = prior_sq_(i) * std::exp(gauss_.log_density(proj_.back(), 0.5, c) - lc);
        acc += gauss_.moments(proj_.back(), c, std::sqrt(prior_sq_(i))).var;
    }
    current_ = r > 0 ? acc / static_cast<double>(r) : 0.0;
    for (const auto& gp : ctx.emulator.gps) whitened_ref_.push_back(gp_whiten(gp, ctx.reference));
}

double EivarEvaluator::score(Index i) const {
    const Index r = ctx_.reference.rows();
    const Index q = ctx_.emulator.q();
    const Vector star = ctx_.candidates.row(i).transpose();
    Matrix tau(r, q);
    for (Index j = 0; j < q; ++j) {
        const GpState& gp = ctx_.emulator.gps[static_cast<std::size_t>(j)];
        const Vector vstar = gp_whiten(gp, star.transpose()).col(0);
        const double var_new = std::max(gp.params.scale() - vstar.squaredNorm(), 0.0);
        const Vector cov = kernel_matrix(ctx_.reference, star.transpose(), gp.params).col(0) -
                           whitened_ref_[static_cast<std::size_t>(j)].transpose() * vstar;
        tau.col(j) = (cov.array().square() / (var_new + gp.params.nugget()))
                         .min(latent_var_.col(j).array())
                         .matrix();
    }
    const double lc = log_norm_const(ctx_.obs.dim());
    double acc = 0.0;
    for (Index k = 0; k < r; ++k) {
        if (prior_sq_(k) <= 0.0) continue;
        const Vector c = latent_var_.row(k).transpose();
        const Vector t = tau.row(k).transpose();
        const double log_second = gauss_.log_density(proj_[static_cast<std::size_t>(k)], 0.5,
                                                     0.5 * (c + t)) -
                                  lc - 0.5 * gauss_.log_det(1.0, c - t);
        acc += std::max(first_term_(k) - prior_sq_(k) * std::exp(log_second), 0.0);
    }
    return acc / static_cast<double>(r);
}

Vector EivarEvaluator::scores() const {
    Vector out(ctx_.candidates.rows());
    for (Index i = 0; i < out.size(); ++i) out(i) = score(i);
    return out;
}

Vector eivar_scores(const AcquisitionContext& ctx) { return EivarEvaluator(ctx).scores(); }

double eivar_score(const AcquisitionContext& ctx, Index candidate) {
    return EivarEvaluator(ctx).score(candidate);
}

Vector maxvar_scores(const AcquisitionContext& ctx) {
    const EmulatorBatchPrediction pred = emu_predict_batch(ctx.emulator, ctx.candidates);
    const LowRankGaussian g(ctx.obs, ctx.emulator.loading());
    Vector out(ctx.candidates.rows());
    for (Index i = 0; i < out.size(); ++i) {
        const double p = ctx.prior.density(ctx.candidates.row(i).transpose());
        out(i) = g.moments(g.project(ctx.obs.data() - pred.mean.row(i).transpose()),
                           pred.latent_vars.row(i).transpose(), p)
                     .var;
    }
    return out;
}

double maxvar_score(const AcquisitionContext& ctx, Index candidate) {
    const Vector theta = ctx.candidates.row(candidate).transpose();
    return post_mean_var(emu_predict(ctx.emulator, theta), ctx.obs, ctx.prior.density(theta)).var;
}

Vector maxexp_scores(const AcquisitionContext& ctx) {
    const Bounds& b = ctx.prior.bounds();
    const Index nh = ctx.history.size();
    const Index np = static_cast<Index>(ctx.history.pending.size());
    if (nh + np == 0) throw EmptyHistory("MAXEXP needs at least one evaluated or pending point");
    Matrix used(nh + np, b.dim());
    for (Index i = 0; i < nh; ++i) used.row(i) = b.to_unit(ctx.history.params.row(i).transpose());
    for (Index i = 0; i < np; ++i) {
        used.row(nh + i) = b.to_unit(ctx.history.pending[static_cast<std::size_t>(i)]);
    }
    const EmulatorBatchPrediction pred = emu_predict_batch(ctx.emulator, ctx.candidates);
    const LowRankGaussian g(ctx.obs, ctx.emulator.loading());
    Vector out(ctx.candidates.rows());
    for (Index i = 0; i < out.size(); ++i) {
        const Vector theta = ctx.candidates.row(i).transpose();
        const double mean = g.moments(g.project(ctx.obs.data() - pred.mean.row(i).transpose()),
                                      pred.latent_vars.row(i).transpose(),
                                      ctx.prior.density(theta))
                                .mean;
        const double dist = (used.rowwise() - b.to_unit(theta).transpose()).rowwise().norm().minCoeff();
        out(i) = mean * dist;
    }
    return out;
}

double maxexp_score(const AcquisitionContext& ctx, Index candidate) {
    return maxexp_scores(ctx)(candidate);
}

Vector imse_scores(const AcquisitionContext& ctx) {
    if (ctx.emulator.output_dim() != 1) {
        throw UnsupportedDimension("IMSE is defined for scalar simulation output only");
    }
    const GpState& gp = ctx.emulator.gps.front();
    Vector mean, var;
    gp_predict_batch(gp, ctx.reference, mean, var);
    const double total = var.sum();
    Vector out(ctx.candidates.rows());
    for (Index i = 0; i < out.size(); ++i) {
        out(i) = total - gp_fantasy(gp, ctx.candidates.row(i).transpose(), ctx.reference)
                             .cov_reduction.sum();
    }
    return out;
}

double imse_score(const AcquisitionContext& ctx, Index candidate) {
    return imse_scores(ctx)(candidate);
}

PosteriorSurrogate fit_posterior_surrogate(const Dataset& history, const ObsModel& obs,
                                           const Prior& prior, std::uint64_t seed) {
    if (history.size() == 0) throw EmptyHistory("EI needs evaluated points");
    Vector target(history.size());
    const Matrix sigma = obs.effective_sigma();
    for (Index i = 0; i < history.size(); ++i) {
        const Vector theta = history.params.row(i).transpose();
        target(i) = std::exp(mvn_logpdf(obs.data(), history.outputs.row(i).transpose(), sigma)) *
                    prior.density(theta);
    }
    PosteriorSurrogate s;
    GpFitOptions o;
    o.seed = seed;
    s.gp = gp_fit(history.params, target, o);
    s.p_max = target.maxCoeff();
    return s;
}

double expected_improvement(double mean, double sd, double p_max) {
    const double diff = mean - p_max;
    if (!(sd > 1e-12)) return std::max(diff, 0.0);
    const double z = diff / sd;
    return std::max(diff * standard_normal_cdf(z) + sd * standard_normal_pdf(z), 0.0);
}

double ei_score(const PosteriorSurrogate& surrogate, const Vector& candidate) {
    const GpPrediction p = gp_predict(surrogate.gp, candidate);
    return expected_improvement(p.mean, std::sqrt(p.var), surrogate.p_max);
}

Selection select_from_scores(const Vector& scores, bool minimize) {
    if (scores.size() == 0) throw EmptyCandidates("no candidates to select from");
    Selection best{0, scores(0)};
    for (Index i = 1; i < scores.size(); ++i) {
        const double s = scores(i);
        if (std::isnan(s)) continue;
        const bool better = std::isnan(best.score) || (minimize ? s < best.score : s > best.score);
        if (better) best = {i, s};
    }
    return best;
}

Selection select(const AcquisitionContext& ctx, AcquisitionKind kind, std::uint64_t seed) {
    const Index l = ctx.candidates.rows();
    if (l == 0) throw EmptyCandidates("no candidates to select from");
    switch (kind) {
        case AcquisitionKind::EIVAR: return select_from_scores(eivar_scores(ctx), true);
        case AcquisitionKind::MAXVAR: return select_from_scores(maxvar_scores(ctx), false);
        case AcquisitionKind::MAXEXP: return select_from_scores(maxexp_scores(ctx), false);
        case AcquisitionKind::IMSE: return select_from_scores(imse_scores(ctx), true);
        case AcquisitionKind::EI: {
            const PosteriorSurrogate s = fit_posterior_surrogate(ctx.history, ctx.obs, ctx.prior, seed);
            Vector scores(l);
            for (Index i = 0; i < l; ++i) scores(i) = ei_score(s, ctx.candidates.row(i).transpose());
            return select_from_scores(scores, false);
        }
        case AcquisitionKind::RND: {
            Rng rng(seed);
            std::uniform_int_distribution<Index> pick(0, l - 1);
            return {pick(rng), 0.0};
        }
    }
    throw ConfigInvalid("unknown acquisition kind");
}

}  // namespace eivar
