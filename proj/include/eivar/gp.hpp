#ifndef EIVAR_GP_HPP
#define EIVAR_GP_HPP

#include "eivar/common.hpp"

#include <cmath>
#include <cstdint>
#include <optional>

namespace eivar {

/// Hyperparameters of one latent GP. Rates are exp(log_lengthscales).
struct KernelParams {
    double log_scale = 0.0;
    Vector log_lengthscales;
    double log_nugget = std::log(1e-8);

    [[nodiscard]] double scale() const { return std::exp(log_scale); }
    [[nodiscard]] double nugget() const { return std::exp(log_nugget); }
    [[nodiscard]] Index dim() const { return log_lengthscales.size(); }
};

/// Separable Matern-1.5 correlation between two points `delta` apart.
template <typename DerivedA, typename DerivedB>
[[nodiscard]] double matern15(const Eigen::MatrixBase<DerivedA>& delta,
                              const Eigen::MatrixBase<DerivedB>& log_lengthscales) {
    double out = 1.0;
    for (Index l = 0; l < delta.size(); ++l) {
        const double r = std::abs(delta(l)) * std::exp(log_lengthscales(l));
        out *= (1.0 + r) * std::exp(-r);
    }
    return out;
}

/// Scaled kernel matrix tau^2 * c(a_i, b_j), no nugget. Rows of a and b are points.
template <typename DerivedA, typename DerivedB>
[[nodiscard]] Matrix kernel_matrix(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b,
                                   const KernelParams& params) {
    const Vector rate = params.log_lengthscales.array().exp();
    Matrix out = Matrix::Constant(a.rows(), b.rows(), params.scale());
    for (Index l = 0; l < a.cols(); ++l) {
        for (Index j = 0; j < b.rows(); ++j) {
            for (Index i = 0; i < a.rows(); ++i) {
                const double r = std::abs(a(i, l) - b(j, l)) * rate(l);
                out(i, j) *= (1.0 + r) * std::exp(-r);
            }
        }
    }
    return out;
}

/// Immutable fitted state of a zero-mean GP.
struct GpState {
    Matrix train_inputs;
    Vector train_targets;
    KernelParams params;
    Matrix chol_factor;  // lower triangle of K = kernel + nugget * I
    Vector alpha;        // K^{-1} targets

    [[nodiscard]] Index size() const { return train_inputs.rows(); }
    [[nodiscard]] Index dim() const { return train_inputs.cols(); }
};

struct GpFitOptions {
    std::optional<KernelParams> init;
    bool fixed = false;
    std::uint64_t seed = 0;
    int starts = 4;
    int max_iterations = 200;
};

struct GpPrediction {
    double mean = 0.0;
    double var = 0.0;
};

struct GpFantasy {
    Vector cov_reduction;
    double pred_var_at_new = 0.0;
};

/// Builds the state at fixed parameters, escalating the nugget if Cholesky fails.
[[nodiscard]] GpState gp_build(const Matrix& inputs, const Vector& targets,
                               const KernelParams& params);

/// Fits hyperparameters by multi-start maximization of the log evidence unless fixed.
[[nodiscard]] GpState gp_fit(const Matrix& inputs, const Vector& targets,
                             const GpFitOptions& options = {});

[[nodiscard]] GpPrediction gp_predict(const GpState& state, const Vector& query);

/// Batch prediction at the rows of `queries`.
void gp_predict_batch(const GpState& state, const Matrix& queries, Vector& mean, Vector& var);

/// L^{-1} k(X, queries), the whitened cross-covariance (n x m).
[[nodiscard]] Matrix gp_whiten(const GpState& state, const Matrix& queries);

[[nodiscard]] double gp_log_marginal_likelihood(const GpState& state);

/// Gradient with respect to (log_scale, log_lengthscales..., log_nugget).
[[nodiscard]] Vector gp_loglik_grad(const GpState& state);

/// Variance reductions at `queries` from conditioning on one more observation at `new_input`.
[[nodiscard]] GpFantasy gp_fantasy(const GpState& state, const Vector& new_input,
                                   const Matrix& queries);

/// Appends one observation, extending the Cholesky factor by one row.
[[nodiscard]] GpState gp_extend(const GpState& state, const Vector& new_input, double target);

}  // namespace eivar

#endif
