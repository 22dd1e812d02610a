#ifndef EIVAR_DESIGNER_HPP
#define EIVAR_DESIGNER_HPP

#include "eivar/acquisition.hpp"
#include "eivar/common.hpp"
#include "eivar/emulator.hpp"
#include "eivar/problems.hpp"
#include "eivar/scheduler.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace eivar {

enum class Driver { sequential, batch, async };
[[nodiscard]] std::string to_string(Driver d);
[[nodiscard]] Driver parse_driver(std::string_view name);

enum class PendingRule { believer, liar };
[[nodiscard]] std::string to_string(PendingRule r);
[[nodiscard]] PendingRule parse_pending_rule(std::string_view name);

struct ReferenceSpec {
    Index grid_per_dim = 50;  // tensor grid when p <= max_grid_dim
    Index max_grid_dim = 2;
    Index lhs_size = 10000;   // LHS size otherwise
};

struct StoppingRule {
    /// Stop once the holdout MAD drops to this value; evaluation count still caps the run.
    std::optional<double> mad_threshold;
    Index holdout_size = 500;
};

struct RunConfig {
    std::string problem = "unimodal";
    ProblemOptions problem_options;
    AcquisitionKind acquisition = AcquisitionKind::EIVAR;
    Driver driver = Driver::sequential;
    Index n0 = 10;
    Index n = 100;
    Index batch = 1;
    Index workers = 1;
    Index trigger = 1;
    Index per_trigger = 1;
    Index candidates = 100;
    ReferenceSpec reference;
    std::uint64_t seed = 1;
    PendingRule pending_rule = PendingRule::believer;
    StoppingRule stopping;
    double variance_fraction = 0.995;
    /// Multi-start refits every this many fits; other fits polish the previous optimum only.
    Index full_refit_interval = 10;
    int fit_starts = 4;
    /// Estimate the observation covariance by the ancillary MLE at every fit.
    bool unknown_covariance = false;
    bool fix_sigma_b_zero = false;
    ExecutionMode mode = ExecutionMode::simulated;
    /// Overrides the problem's runtime law in the simulated clock.
    std::optional<DurationModel> durations;
    /// Simulated time spent acquiring each generation after the first.
    double acquisition_time = 0.0;
    Index max_failures = 16;
};

/// Throws ConfigInvalid when the configuration cannot be run.
void validate(const RunConfig& cfg);

struct AcquisitionRecord {
    Index stage = 0;
    Index generation = 0;
    Index job_id = 0;
    Vector theta;
    Vector eta;
    double score = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;
};

/// Everything needed to rebuild the emulator behind one MAD value.
struct MadCheckpoint {
    Index n_data = 0;
    Index q = 0;
    std::vector<KernelParams> params;
    /// Observation covariance used when it was estimated; empty otherwise.
    Matrix obs_sigma;
};

/// Snapshot of |D^c|, |D^uc| and the remaining budget.
struct BudgetSnapshot {
    Index completed = 0;
    Index pending = 0;
    Index remaining = 0;
};

struct RunResult {
    std::vector<AcquisitionRecord> acquisitions;  // completion order
    std::vector<double> mad_trace;                // one entry per completed acquisition
    std::optional<double> initial_mad;
    std::vector<MadCheckpoint> checkpoints;       // aligned with mad_trace
    std::vector<BudgetSnapshot> budget_log;
    JobTrace job_trace;
    Dataset data;                                 // initial design then completion order
    Matrix reference;
    Vector reference_truth;
    bool aborted = false;
    bool stopped_early = false;
    std::string reason;
    double wall_time = 0.0;
};

[[nodiscard]] double mad(const Vector& truth, const Vector& estimate);

/// Seeded Latin hypercube over the box.
[[nodiscard]] Matrix make_initial_design(const Bounds& bounds, Index n0, std::uint64_t seed);

[[nodiscard]] Matrix make_reference_set(const Bounds& bounds, const ReferenceSpec& spec,
                                        std::uint64_t seed);

/// Expected unnormalized posterior under the emulator at every row of `points`.
[[nodiscard]] Vector estimate_posterior(const PcgpEmulator& emu, const ObsModel& obs,
                                        const Prior& prior, const Matrix& points);

/// Rebuilds the emulator of a checkpoint from the stored data.
[[nodiscard]] PcgpEmulator rebuild_emulator(const Dataset& data, const MadCheckpoint& cp);

/// MAD of a checkpoint against the reference truth, recomputed from scratch.
[[nodiscard]] double recompute_mad(const RunResult& result, const Problem& problem,
                                   const MadCheckpoint& cp);

[[nodiscard]] RunResult run_sequential(const RunConfig& cfg, const Problem& problem);
[[nodiscard]] RunResult run_batch(const RunConfig& cfg, const Problem& problem);
[[nodiscard]] RunResult run_async(const RunConfig& cfg, const Problem& problem);

/// Dispatches on cfg.driver.
[[nodiscard]] RunResult run(const RunConfig& cfg, const Problem& problem);
[[nodiscard]] RunResult run(const RunConfig& cfg);

}  // namespace eivar

#endif
