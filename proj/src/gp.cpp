#include "eivar/gp.hpp"
#include "eivar/sampling.hpp"

#include "boxed_lbfgs.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace eivar {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNuggetFloor = 1e-8;  // relative to tau^2
constexpr double kNuggetCeiling = 1e-2;

// Pairwise absolute coordinate differences, one n x n matrix per dimension.
std::vector<Matrix> abs_differences(const Matrix& x) {
    const Index n = x.rows();
    std::vector<Matrix> out(static_cast<std::size_t>(x.cols()), Matrix(n, n));
    for (Index l = 0; l < x.cols(); ++l) {
        Matrix& d = out[static_cast<std::size_t>(l)];
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < n; ++i) d(i, j) = std::abs(x(i, l) - x(j, l));
        }
    }
    return out;
}

struct Evidence {
    double value = 0.0;
    Vector grad;  // (log_scale, zeta..., log_nugget)
};

// Log evidence and its gradient for fixed data, reusing the difference matrices.
std::optional<Evidence> evidence(const std::vector<Matrix>& diffs, const Vector& w,
                                 const KernelParams& params, bool want_grad) {
    const Index n = w.size();
    const Index p = params.dim();
    const double tau2 = params.scale();
    const double nug = params.nugget();

    Matrix corr = Matrix::Ones(n, n);
    std::vector<Matrix> ratio;  // r^2 / (1 + r) per dimension
    if (want_grad) ratio.reserve(static_cast<std::size_t>(p));
    for (Index l = 0; l < p; ++l) {
        const double rate = std::exp(params.log_lengthscales(l));
        const Eigen::ArrayXXd r = diffs[static_cast<std::size_t>(l)].array() * rate;
        corr.array() *= (1.0 + r) * (-r).exp();
        if (want_grad) ratio.emplace_back((r * r / (1.0 + r)).matrix());
    }

    Matrix k = tau2 * corr;
    k.diagonal().array() += nug;
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Vector alpha = llt.solve(w);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

    Evidence out;
    out.value = -0.5 * w.dot(alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;
    if (!std::isfinite(out.value)) return std::nullopt;
    if (!want_grad) return out;

    Matrix wmat = alpha * alpha.transpose() - llt.solve(Matrix::Identity(n, n));
    out.grad.resize(p + 2);
    out.grad(0) = 0.5 * (wmat.array() * corr.array()).sum() * tau2;
    for (Index l = 0; l < p; ++l) {
        out.grad(1 + l) = -0.5 * tau2 *
                          (wmat.array() * corr.array() * ratio[static_cast<std::size_t>(l)].array())
                              .sum();
    }
    out.grad(p + 1) = 0.5 * nug * wmat.trace();
    return out;
}

// Search variables v = (log tau^2, zeta..., log(nugget / tau^2)).
KernelParams from_search(const Vector& v) {
    KernelParams kp;
    const Index p = v.size() - 2;
    kp.log_scale = v(0);
    kp.log_lengthscales = v.segment(1, p);
    kp.log_nugget = v(0) + v(p + 1);
    return kp;
}

Vector to_search(const KernelParams& kp) {
    const Index p = kp.dim();
    Vector v(p + 2);
    v(0) = kp.log_scale;
    v.segment(1, p) = kp.log_lengthscales;
    v(p + 1) = kp.log_nugget - kp.log_scale;
    return v;
}

struct SearchBox {
    Bounds hard;
    Bounds start;
};

SearchBox make_box(const Matrix& x, const Vector& w) {
    const Index p = x.cols();
    double var0 = w.size() > 0 ? w.squaredNorm() / static_cast<double>(w.size()) : 1.0;
    if (!(var0 > 1e-300)) var0 = 1.0;
    const double lv = std::log(var0);
    Vector lo(p + 2), hi(p + 2), slo(p + 2), shi(p + 2);
    lo(0) = lv - 9.0;
    hi(0) = lv + 9.0;
    slo(0) = lv - 1.0;
    shi(0) = lv + 2.0;
    for (Index l = 0; l < p; ++l) {
        double range = x.rows() > 0 ? x.col(l).maxCoeff() - x.col(l).minCoeff() : 0.0;
        if (!(range > 1e-12)) range = 1.0;
        const double lr = std::log(range);
        lo(1 + l) = std::log(0.05) - lr;
        hi(1 + l) = std::log(200.0) - lr;
        slo(1 + l) = std::log(0.5) - lr;
        shi(1 + l) = std::log(20.0) - lr;
    }
    lo(p + 1) = std::log(kNuggetFloor);
    hi(p + 1) = std::log(kNuggetCeiling);
    slo(p + 1) = std::log(kNuggetFloor);
    shi(p + 1) = std::log(1e-5);
    return {Bounds(lo, hi), Bounds(slo, shi)};
}

}  // namespace

GpState gp_build(const Matrix& inputs, const Vector& targets, const KernelParams& params) {
    if (inputs.rows() != targets.size()) {
        throw DimensionMismatch("gp: inputs and targets differ in length");
    }
    if (params.dim() != inputs.cols()) {
        throw DimensionMismatch("gp: lengthscale vector does not match input dimension");
    }
    GpState st;
    st.train_inputs = inputs;
    st.train_targets = targets;
    st.params = params;
    const Matrix k0 = kernel_matrix(inputs, inputs, params);
    const double tau2 = params.scale();
    double nug = params.nugget();
    for (;;) {
        Matrix k = k0;
        k.diagonal().array() += nug;
        Eigen::LLT<Matrix> llt(k);
        if (llt.info() == Eigen::Success) {
            st.params.log_nugget = std::log(nug);
            st.chol_factor = llt.matrixL();
            st.alpha = llt.solve(targets);
            return st;
        }
        const double next = std::max(nug * 10.0, kNuggetFloor * tau2);
        if (next > kNuggetCeiling * tau2 * (1.0 + 1e-12)) {
            throw CholeskyFailure("gp: kernel matrix not positive definite after nugget escalation");
        }
        nug = next;
    }
}

GpState gp_fit(const Matrix& inputs, const Vector& targets, const GpFitOptions& options) {
    if (inputs.rows() < 1) throw DimensionMismatch("gp: need at least one training point");
    if (inputs.rows() != targets.size()) {
        throw DimensionMismatch("gp: inputs and targets differ in length");
    }
    if (options.fixed) {
        if (!options.init) throw Error("gp: fixed fit requires parameters");
        return gp_build(inputs, targets, *options.init);
    }

    const SearchBox box = make_box(inputs, targets);
    const Index m = box.hard.dim();
    Rng rng(options.seed);
    const int starts = std::max(1, options.starts);
    Matrix start_points = latin_hypercube(box.start, starts, rng);
    if (options.init && options.init->dim() == inputs.cols()) {
        start_points.row(0) = to_search(*options.init).transpose();
    }

    const std::vector<Matrix> diffs = abs_differences(inputs);
    const Index p = inputs.cols();
    const detail::BoxedObjective objective = [&](const Vector& v,
                                                 Vector* grad) -> std::optional<double> {
        const auto ev = evidence(diffs, targets, from_search(v), grad != nullptr);
        if (!ev) return std::nullopt;
        if (grad != nullptr) {
            // chain rule from (log tau^2, zeta, log nugget) to search variables
            grad->resize(m);
            (*grad)(0) = ev->grad(0) + ev->grad(p + 1);
            grad->segment(1, p) = ev->grad.segment(1, p);
            (*grad)(p + 1) = ev->grad(p + 1);
        }
        return ev->value;
    };

    double best = -std::numeric_limits<double>::infinity();
    std::optional<Vector> best_v;
    for (int s = 0; s < starts; ++s) {
        const auto res = detail::maximize_in_box(box.hard, start_points.row(s).transpose(),
                                                 objective, options.max_iterations);
        if (res && res->value > best) {
            best = res->value;
            best_v = res->v;
        }
    }
    if (!best_v) throw CholeskyFailure("gp: every optimizer start failed to factorize");
    return gp_build(inputs, targets, from_search(*best_v));
}

Matrix gp_whiten(const GpState& state, const Matrix& queries) {
    const Matrix kx = kernel_matrix(state.train_inputs, queries, state.params);
    return state.chol_factor.triangularView<Eigen::Lower>().solve(kx);
}

void gp_predict_batch(const GpState& state, const Matrix& queries, Vector& mean, Vector& var) {
    const Matrix kx = kernel_matrix(state.train_inputs, queries, state.params);
    mean = kx.transpose() * state.alpha;
    const Matrix v = state.chol_factor.triangularView<Eigen::Lower>().solve(kx);
    var = (state.params.scale() - v.colwise().squaredNorm().array()).max(0.0).matrix();
}

GpPrediction gp_predict(const GpState& state, const Vector& query) {
    if (query.size() != state.dim()) throw DimensionMismatch("gp: query dimension");
    Vector mean, var;
    gp_predict_batch(state, query.transpose(), mean, var);
    return {mean(0), var(0)};
}

double gp_log_marginal_likelihood(const GpState& state) {
    const Index n = state.size();
    const double logdet = 2.0 * state.chol_factor.diagonal().array().log().sum();
    return -0.5 * state.train_targets.dot(state.alpha) - 0.5 * logdet -
           0.5 * static_cast<double>(n) * kLog2Pi;
}

Vector gp_loglik_grad(const GpState& state) {
    const auto ev = evidence(abs_differences(state.train_inputs), state.train_targets,
                             state.params, true);
    if (!ev) throw CholeskyFailure("gp: gradient evaluation failed to factorize");
    return ev->grad;
}

GpFantasy gp_fantasy(const GpState& state, const Vector& new_input, const Matrix& queries) {
    const double tau2 = state.params.scale();
    const double nug = state.params.nugget();
    const Matrix vstar = gp_whiten(state, new_input.transpose());
    const double var_new = std::max(tau2 - vstar.squaredNorm(), 0.0);
    const Matrix vq = gp_whiten(state, queries);
    const Vector var_q = (tau2 - vq.colwise().squaredNorm().array()).max(0.0).matrix();
    const Vector cov = kernel_matrix(queries, new_input.transpose(), state.params).col(0) -
                       vq.transpose() * vstar.col(0);
    GpFantasy out;
    out.pred_var_at_new = var_new;
    out.cov_reduction = (cov.array().square() / (var_new + nug)).min(var_q.array()).matrix();
    return out;
}

GpState gp_extend(const GpState& state, const Vector& new_input, double target) {
    if (new_input.size() != state.dim()) throw DimensionMismatch("gp: new input dimension");
    const Index n = state.size();
    const double tau2 = state.params.scale();
    const double nug = state.params.nugget();
    const Vector v = gp_whiten(state, new_input.transpose()).col(0);
    const double schur = std::max(tau2 - v.squaredNorm(), 0.0) + nug;

    GpState out;
    out.params = state.params;
    out.train_inputs.resize(n + 1, state.dim());
    out.train_inputs.topRows(n) = state.train_inputs;
    out.train_inputs.row(n) = new_input.transpose();
    out.train_targets.resize(n + 1);
    out.train_targets.head(n) = state.train_targets;
    out.train_targets(n) = target;
    out.chol_factor = Matrix::Zero(n + 1, n + 1);
    out.chol_factor.topLeftCorner(n, n) = state.chol_factor;
    out.chol_factor.block(n, 0, 1, n) = v.transpose();
    out.chol_factor(n, n) = std::sqrt(schur);
    const Matrix& l = out.chol_factor;
    out.alpha = l.triangularView<Eigen::Lower>().solve(out.train_targets);
    l.triangularView<Eigen::Lower>().transpose().solveInPlace(out.alpha);
    return out;
}

}  // namespace eivar
