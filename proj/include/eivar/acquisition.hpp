#ifndef EIVAR_ACQUISITION_HPP
#define EIVAR_ACQUISITION_HPP

#include "eivar/common.hpp"
#include "eivar/emulator.hpp"
#include "eivar/gp.hpp"
#include "eivar/posterior.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace eivar {

enum class AcquisitionKind { EIVAR, MAXVAR, MAXEXP, EI, IMSE, RND };

[[nodiscard]] std::string to_string(AcquisitionKind kind);
/// Throws ConfigInvalid for unknown names.
[[nodiscard]] AcquisitionKind parse_acquisition(std::string_view name);

/// Everything a criterion needs at one stage. Members are borrowed, not owned.
struct AcquisitionContext {
    const PcgpEmulator& emulator;
    const ObsModel& obs;
    const Prior& prior;
    const Matrix& candidates;  // L x p
    const Matrix& reference;   // R x p
    const Dataset& history;    // evaluated points and pending parameters
};

/// Shared per-stage precomputation for the EIVAR integral.
class EivarEvaluator {
public:
    explicit EivarEvaluator(const AcquisitionContext& ctx);

    /// Expected integrated variance after evaluating candidate i (lower is better).
    [[nodiscard]] double score(Index i) const;
    [[nodiscard]] Vector scores() const;
    /// Current integrated variance (1/R) sum p^2 V over the reference set.
    [[nodiscard]] double current_integrated_variance() const { return current_; }

private:
    const AcquisitionContext& ctx_;
    LowRankGaussian gauss_;
    std::vector<LowRankGaussian::Projected> proj_;
    Vector prior_sq_;
    Matrix latent_var_;  // R x q
    Vector first_term_;  // per reference point, already times p^2
    std::vector<Matrix> whitened_ref_;  // per component, n x R
    double current_ = 0.0;
};

[[nodiscard]] double eivar_score(const AcquisitionContext& ctx, Index candidate);
[[nodiscard]] double maxvar_score(const AcquisitionContext& ctx, Index candidate);
[[nodiscard]] double maxexp_score(const AcquisitionContext& ctx, Index candidate);
[[nodiscard]] double imse_score(const AcquisitionContext& ctx, Index candidate);

/// Batch versions evaluate every candidate with shared precomputation.
[[nodiscard]] Vector eivar_scores(const AcquisitionContext& ctx);
[[nodiscard]] Vector maxvar_scores(const AcquisitionContext& ctx);
[[nodiscard]] Vector maxexp_scores(const AcquisitionContext& ctx);
[[nodiscard]] Vector imse_scores(const AcquisitionContext& ctx);

/// Single-output GP fitted directly to the unnormalized posterior at evaluated points.
struct PosteriorSurrogate {
    GpState gp;
    double p_max = 0.0;
};

[[nodiscard]] PosteriorSurrogate fit_posterior_surrogate(const Dataset& history,
                                                         const ObsModel& obs, const Prior& prior,
                                                         std::uint64_t seed);

/// Expected improvement of N(mean, sd^2) over p_max.
[[nodiscard]] double expected_improvement(double mean, double sd, double p_max);
[[nodiscard]] double ei_score(const PosteriorSurrogate& surrogate, const Vector& candidate);

struct Selection {
    Index index = 0;
    double score = 0.0;
};

/// Optimum over the candidates, ties to the lowest index.
[[nodiscard]] Selection select(const AcquisitionContext& ctx, AcquisitionKind kind,
                               std::uint64_t seed);

/// Picks the optimum of precomputed scores; minimize selects the smallest.
[[nodiscard]] Selection select_from_scores(const Vector& scores, bool minimize);

}  // namespace eivar

#endif
