#ifndef EIVAR_POSTERIOR_HPP
#define EIVAR_POSTERIOR_HPP

#include "eivar/common.hpp"
#include "eivar/emulator.hpp"

#include <Eigen/Cholesky>

#include <cstdint>

namespace eivar {

class Prior {
public:
    enum class Kind { uniform_box, truncated_gaussian };

    Prior() = default;
    static Prior uniform(Bounds bounds);
    /// Independent Gaussian coordinates truncated to the box.
    static Prior truncated_gaussian(Bounds bounds, Vector mean, Vector sd);

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] const Bounds& bounds() const { return bounds_; }
    [[nodiscard]] const Vector& mean() const { return mean_; }
    [[nodiscard]] const Vector& sd() const { return sd_; }
    [[nodiscard]] Index dim() const { return bounds_.dim(); }
    [[nodiscard]] double density(const Vector& theta) const;

private:
    Kind kind_ = Kind::uniform_box;
    Bounds bounds_;
    Vector mean_;
    Vector sd_;
    double log_norm_ = 0.0;
};

struct JitteredCholesky {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

/// Cholesky of m, adding 1e-10 ... 1e-4 times the mean diagonal when m is not PD.
[[nodiscard]] JitteredCholesky cholesky_with_jitter(const Matrix& m);

/// Observed data y with noise covariance Sigma.
class ObsModel {
public:
    ObsModel() = default;
    ObsModel(Vector data, Matrix sigma);

    [[nodiscard]] const Vector& data() const { return data_; }
    [[nodiscard]] const Matrix& sigma() const { return sigma_; }
    [[nodiscard]] double jitter() const { return jitter_; }
    [[nodiscard]] Index dim() const { return data_.size(); }
    /// Sigma + jitter * I.
    [[nodiscard]] Matrix effective_sigma() const;

private:
    Vector data_;
    Matrix sigma_;
    double jitter_ = 0.0;
};

[[nodiscard]] double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& cov);

struct PosteriorMoments {
    double mean = 0.0;
    double var = 0.0;
};

/// Mean and variance of the unnormalized posterior under the emulator at one parameter.
[[nodiscard]] PosteriorMoments post_mean_var(const EmulatorPrediction& pred, const ObsModel& obs,
                                             double prior_density);

/// Same moments from a dense emulator covariance S.
[[nodiscard]] PosteriorMoments post_mean_var_dense(const Vector& mu, const Matrix& s,
                                                   const ObsModel& obs, double prior_density);

/// Gaussian densities with covariance a * Sigma + F diag(c) F^T for a fixed loading F.
/// Every operation costs O(q^3) once the residual has been projected.
class LowRankGaussian {
public:
    struct Projected {
        Vector u;            // F^T Sigma^{-1} r
        double mahal = 0.0;  // r^T Sigma^{-1} r
    };

    LowRankGaussian(const ObsModel& obs, const Matrix& loading);

    [[nodiscard]] Projected project(const Vector& residual) const;
    [[nodiscard]] double log_det(double a, const Vector& latent) const;
    [[nodiscard]] double log_density(const Projected& r, double a, const Vector& latent) const;
    [[nodiscard]] double log_det_sigma() const { return log_det_sigma_; }
    [[nodiscard]] Index dim() const { return d_; }
    /// Posterior mean and variance from log-space terms; per-point latent variances c.
    [[nodiscard]] PosteriorMoments moments(const Projected& r, const Vector& latent,
                                           double prior_density) const;

private:
    Index d_ = 0;
    Eigen::LLT<Matrix> sigma_llt_;
    Matrix sigma_inv_f_;  // Sigma^{-1} F
    Matrix gram_;         // F^T Sigma^{-1} F
    double log_det_sigma_ = 0.0;

    // log det(a I + E M E) and the quadratic correction for E = diag(sqrt(c)).
    struct Inner {
        double log_det = 0.0;
        double quad = 0.0;
    };
    Inner inner(const Vector* u, double a, const Vector& latent) const;
};

/// Combines log E and log of the first variance term into a clamped variance.
[[nodiscard]] double variance_from_logs(double log_first, double log_mean);

struct AncillaryParams {
    double sigma_eps_sq = 1.0;
    double sigma_b_sq = 0.0;
    double lambda = 1.0;
    Matrix design_points;  // d x dx

    /// Sigma^e with entries sigma_eps_sq * delta_ij + sigma_b_sq * exp(-lambda |x_i - x_j|).
    [[nodiscard]] Matrix covariance() const;
};

struct AncillaryOptions {
    double sigma_eps_sq_min = 1e-6;
    double sigma_eps_sq_max = 10.0;
    double sigma_b_sq_min = 0.0;
    double sigma_b_sq_max = 10.0;
    double lambda_min = 1e-3;
    double lambda_max = 100.0;
    bool fix_sigma_b_zero = false;
    int starts = 8;
    int max_iterations = 300;
};

struct AncillaryFit {
    AncillaryParams params;
    Vector theta_hat;
    double log_likelihood = 0.0;
};

/// log of |Sigma^e + S|^{-1/2} exp(-r^T (Sigma^e + S)^{-1} r / 2), r = y - mu(theta).
[[nodiscard]] double ancillary_log_likelihood(const PcgpEmulator& emu, const Vector& y,
                                              const AncillaryParams& params, const Vector& theta);

[[nodiscard]] AncillaryFit fit_ancillary(const PcgpEmulator& emu, const Vector& y,
                                         const Matrix& design_points, const Bounds& theta_bounds,
                                         const AncillaryOptions& options, std::uint64_t seed);

}  // namespace eivar

#endif
