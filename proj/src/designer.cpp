#include "eivar/designer.hpp"
#include "eivar/posterior.hpp"
#include "eivar/sampling.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>

namespace eivar {

namespace {

// Seed streams derived from the run seed.
constexpr std::uint64_t kInitialStream = 1;
constexpr std::uint64_t kCandidateStream = 2;
constexpr std::uint64_t kSelectStream = 3;
constexpr std::uint64_t kFitStream = 4;
constexpr std::uint64_t kReferenceStream = 5;
constexpr std::uint64_t kHoldoutStream = 6;
constexpr std::uint64_t kAncillaryStream = 7;

struct PendingEntry {
    Vector theta;
    double score = 0.0;
};

Vector truth_at(const Problem& problem, const Matrix& points) {
    Vector out(points.rows());
    for (Index i = 0; i < points.rows(); ++i) {
        out(i) = problem.true_posterior(points.row(i).transpose());
    }
    return out;
}

class Session {
public:
    Session(const RunConfig& cfg, const Problem& problem)
        : cfg_(cfg), problem_(problem), obs_(problem.obs), start_(std::chrono::steady_clock::now()) {
        validate(cfg);
        if (problem.p != problem.bounds().dim()) throw DimensionMismatch("designer: problem dimension");
        budget_left_ = cfg.n;
        result_.reference = make_reference_set(problem.bounds(), cfg.reference,
                                               derive_seed(cfg.seed, kReferenceStream, 0));
        if (problem.analytic) result_.reference_truth = truth_at(problem, result_.reference);
        if (cfg.stopping.mad_threshold) {
            Rng rng(derive_seed(cfg.seed, kHoldoutStream, 0));
            holdout_ = latin_hypercube(problem.bounds(), cfg.stopping.holdout_size, rng);
            holdout_truth_ = truth_at(problem, holdout_);
        }
    }

    RunResult& result() { return result_; }
    const Dataset& data() const { return data_; }
    Index budget_left() const { return budget_left_; }
    bool stopped() const { return result_.stopped_early; }

    /// Evaluates the initial design outside the scheduler and fits the first emulator.
    bool initialize() {
        const Matrix design = make_initial_design(problem_.bounds(), cfg_.n0,
                                                  derive_seed(cfg_.seed, kInitialStream, 0));
        Matrix outputs(design.rows(), problem_.d);
        try {
            for (Index i = 0; i < design.rows(); ++i) {
                outputs.row(i) = problem_.evaluate(design.row(i).transpose()).transpose();
            }
        } catch (const SimulatorFailure& e) {
            result_.aborted = true;
            result_.reason = std::string("initial design: ") + e.what();
            return false;
        }
        data_ = Dataset(design, outputs);
        snapshot();
        fit();
        if (result_.reference_truth.size() > 0) {
            result_.initial_mad = mad(result_.reference_truth, current_estimate(result_.reference));
        }
        return true;
    }

    /// Relearns hyperparameters on the completed data.
    void fit() {
        EmulatorFitOptions opt;
        opt.q_policy.variance_fraction = cfg_.variance_fraction;
        opt.seed = derive_seed(cfg_.seed, kFitStream, static_cast<std::uint64_t>(fits_));
        const bool full = last_params_.empty() || cfg_.full_refit_interval <= 1 ||
                          fits_ % cfg_.full_refit_interval == 0;
        opt.starts = full ? cfg_.fit_starts : 1;
        opt.init = last_params_;
        emu_ = emu_fit(data_, opt);
        last_params_ = emu_->params();
        ++fits_;
        if (cfg_.unknown_covariance) {
            AncillaryOptions ao;
            ao.fix_sigma_b_zero = cfg_.fix_sigma_b_zero;
            const AncillaryFit af =
                fit_ancillary(*emu_, problem_.obs.data(), problem_.design_points, problem_.bounds(),
                              ao, derive_seed(cfg_.seed, kAncillaryStream, static_cast<std::uint64_t>(fits_)));
            obs_ = ObsModel(problem_.obs.data(), af.params.covariance());
        }
    }

    /// Chooses `count` new parameters, treating every pending parameter as already evaluated.
    std::vector<Vector> acquire(Index count) {
        std::vector<Vector> out;
        if (result_.stopped_early) return out;
        count = std::min(count, budget_left_);
        if (count <= 0) return out;
        PcgpEmulator emu = *emu_;
        const Vector lie = data_.outputs.colwise().mean().transpose();
        auto augment = [&](const Vector& theta) {
            emu = cfg_.pending_rule == PendingRule::believer ? emu_believe(emu, theta)
                                                             : emu_liar(emu, theta, lie);
        };
        for (const auto& p : pending_) augment(p.theta);
        for (Index i = 0; i < count; ++i) {
            const auto j = static_cast<std::uint64_t>(acquired_);
            Rng rng(derive_seed(cfg_.seed, kCandidateStream, j));
            const Matrix cand = uniform_sample(problem_.bounds(), cfg_.candidates, rng);
            const AcquisitionContext ctx{emu, obs_, problem_.prior, cand, result_.reference, data_};
            const Selection s = select(ctx, cfg_.acquisition, derive_seed(cfg_.seed, kSelectStream, j));
            const Vector theta = cand.row(s.index).transpose();
            ++acquired_;
            pending_.push_back({theta, s.score});
            data_.pending.push_back(theta);
            --budget_left_;
            snapshot();
            out.push_back(theta);
            if (i + 1 < count) augment(theta);
        }
        return out;
    }

    /// Absorbs one finished job; returns false when it failed.
    bool absorb(const Job& job, Index stage) {
        const auto it = std::find_if(pending_.begin(), pending_.end(),
                                     [&](const PendingEntry& p) { return p.theta == job.theta; });
        double score = 0.0;
        if (it != pending_.end()) {
            score = it->score;
            pending_.erase(it);
        }
        data_.drop_pending(job.theta);
        if (job.status != JobStatus::done) {
            ++budget_left_;
            snapshot();
            return false;
        }
        data_.append(job.theta, job.eta);
        snapshot();
        AcquisitionRecord rec;
        rec.stage = stage;
        rec.generation = job.generation_id;
        rec.job_id = job.id;
        rec.theta = job.theta;
        rec.eta = job.eta;
        rec.score = score;
        rec.t_start = job.start_time;
        rec.t_end = job.end_time;
        result_.acquisitions.push_back(std::move(rec));
        track_accuracy();
        return true;
    }

    void advance_for_acquisition(WorkerPool& pool, Index generation) const {
        if (generation > 0 && cfg_.acquisition_time > 0.0) pool.advance(cfg_.acquisition_time);
    }

    void finish(WorkerPool& pool) {
        result_.job_trace = pool.trace();
        result_.data = data_;
        result_.data.pending.clear();
        for (const auto& p : pending_) result_.data.pending.push_back(p.theta);
        result_.wall_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

    void abort(std::string reason) {
        result_.aborted = true;
        result_.reason = std::move(reason);
    }

private:
    const RunConfig& cfg_;
    const Problem& problem_;
    ObsModel obs_;
    std::optional<PcgpEmulator> emu_;
    std::vector<KernelParams> last_params_;
    Dataset data_;
    std::vector<PendingEntry> pending_;
    Index fits_ = 0;
    Index acquired_ = 0;
    Index budget_left_ = 0;
    Matrix holdout_;
    Vector holdout_truth_;
    RunResult result_;
    std::chrono::steady_clock::time_point start_;

    void snapshot() {
        result_.budget_log.push_back({data_.size(), static_cast<Index>(pending_.size()), budget_left_});
    }

    MadCheckpoint checkpoint() const {
        MadCheckpoint cp;
        cp.n_data = data_.size();
        cp.q = emu_->q();
        cp.params = last_params_;
        if (cfg_.unknown_covariance) cp.obs_sigma = obs_.sigma();
        return cp;
    }

    Vector current_estimate(const Matrix& points) const {
        return estimate_posterior(*emu_, obs_, problem_.prior, points);
    }

    // Accuracy after a completion uses the latest hyperparameters refitted to all data.
    void track_accuracy() {
        const bool need_mad = result_.reference_truth.size() > 0;
        const bool need_holdout = cfg_.stopping.mad_threshold.has_value();
        if (!need_mad && !need_holdout) return;
        const MadCheckpoint cp = checkpoint();
        const PcgpEmulator emu = rebuild_emulator(data_, cp);
        if (need_mad) {
            result_.mad_trace.push_back(
                mad(result_.reference_truth, estimate_posterior(emu, obs_, problem_.prior, result_.reference)));
            result_.checkpoints.push_back(cp);
        }
        if (need_holdout) {
            const double h = mad(holdout_truth_, estimate_posterior(emu, obs_, problem_.prior, holdout_));
            if (h <= *cfg_.stopping.mad_threshold) {
                result_.stopped_early = true;
                result_.reason = "holdout MAD threshold reached";
            }
        }
    }
};

WorkerPool make_pool(const RunConfig& cfg, const Problem& problem, Index workers) {
    return WorkerPool(workers, cfg.mode, cfg.durations.value_or(problem.runtime),
                      [&problem](const Vector& t) { return problem.evaluate(t); });
}

}  // namespace

std::string to_string(Driver d) {
    switch (d) {
        case Driver::sequential: return "sequential";
        case Driver::batch: return "batch";
        case Driver::async: return "async";
    }
    return "?";
}

Driver parse_driver(std::string_view name) {
    if (name == "sequential") return Driver::sequential;
    if (name == "batch") return Driver::batch;
    if (name == "async") return Driver::async;
    throw ConfigInvalid("driver: unknown value '" + std::string(name) + "'");
}

std::string to_string(PendingRule r) { return r == PendingRule::believer ? "believer" : "liar"; }

PendingRule parse_pending_rule(std::string_view name) {
    if (name == "believer") return PendingRule::believer;
    if (name == "liar") return PendingRule::liar;
    throw ConfigInvalid("pending_rule: unknown value '" + std::string(name) + "'");
}

void validate(const RunConfig& cfg) {
    if (cfg.n0 < 2) throw ConfigInvalid("n0: must be at least 2");
    if (cfg.n < 0) throw ConfigInvalid("n: must be nonnegative");
    if (cfg.candidates < 1) throw ConfigInvalid("candidates: must be positive");
    if (cfg.fit_starts < 1) throw ConfigInvalid("fit_starts: must be positive");
    if (!(cfg.variance_fraction > 0.0 && cfg.variance_fraction <= 1.0)) {
        throw ConfigInvalid("variance_fraction: must lie in (0, 1]");
    }
    if (cfg.acquisition_time < 0.0) throw ConfigInvalid("acquisition_time: must be nonnegative");
    if (cfg.max_failures < 1) throw ConfigInvalid("max_failures: must be positive");
    switch (cfg.driver) {
        case Driver::sequential:
            if (cfg.batch != 1) throw ConfigInvalid("batch: sequential driver requires batch = 1");
            break;
        case Driver::batch:
            if (cfg.batch < 1) throw ConfigInvalid("batch: must be positive");
            if (cfg.n % cfg.batch != 0) throw ConfigInvalid("batch: n must be divisible by batch");
            break;
        case Driver::async:
            if (cfg.workers < 1) throw ConfigInvalid("workers: must be positive");
            if (cfg.trigger < 1 || cfg.trigger > cfg.workers) {
                throw ConfigInvalid("trigger: must lie in [1, workers]");
            }
            if (cfg.per_trigger < 1) throw ConfigInvalid("per_trigger: must be positive");
            break;
    }
    if (cfg.stopping.mad_threshold && cfg.stopping.holdout_size < 1) {
        throw ConfigInvalid("stopping.holdout_size: must be positive");
    }
}

double mad(const Vector& truth, const Vector& estimate) {
    if (truth.size() != estimate.size()) throw LengthMismatch("mad: vectors differ in length");
    if (truth.size() == 0) return 0.0;
    return (truth - estimate).cwiseAbs().mean();
}

Matrix make_initial_design(const Bounds& bounds, Index n0, std::uint64_t seed) {
    Rng rng(seed);
    return latin_hypercube(bounds, n0, rng);
}

Matrix make_reference_set(const Bounds& bounds, const ReferenceSpec& spec, std::uint64_t seed) {
    if (bounds.dim() <= spec.max_grid_dim) return tensor_grid(bounds, spec.grid_per_dim);
    Rng rng(seed);
    return latin_hypercube(bounds, spec.lhs_size, rng);
}

Vector estimate_posterior(const PcgpEmulator& emu, const ObsModel& obs, const Prior& prior,
                          const Matrix& points) {
    const EmulatorBatchPrediction pred = emu_predict_batch(emu, points);
    const LowRankGaussian gauss(obs, emu.loading());
    Vector out(points.rows());
    for (Index i = 0; i < points.rows(); ++i) {
        const Vector r = obs.data() - pred.mean.row(i).transpose();
        const double pd = prior.density(points.row(i).transpose());
        out(i) = gauss.moments(gauss.project(r), pred.latent_vars.row(i).transpose(), pd).mean;
    }
    return out;
}

PcgpEmulator rebuild_emulator(const Dataset& data, const MadCheckpoint& cp) {
    EmulatorFitOptions opt;
    opt.q_policy.q = cp.q;
    opt.init = cp.params;
    opt.fixed = true;
    return emu_fit(data.head(cp.n_data), opt);
}

double recompute_mad(const RunResult& result, const Problem& problem, const MadCheckpoint& cp) {
    const PcgpEmulator emu = rebuild_emulator(result.data, cp);
    const ObsModel obs = cp.obs_sigma.size() > 0 ? ObsModel(problem.obs.data(), cp.obs_sigma)
                                                 : problem.obs;
    return mad(result.reference_truth, estimate_posterior(emu, obs, problem.prior, result.reference));
}

RunResult run_sequential(const RunConfig& cfg, const Problem& problem) {
    Session s(cfg, problem);
    WorkerPool pool = make_pool(cfg, problem, 1);
    if (s.initialize()) {
        Index stage = 0;
        Index failures = 0;
        while (s.budget_left() > 0 && !s.stopped()) {
            if (stage > 0) s.fit();
            const std::vector<Vector> thetas = s.acquire(1);
            if (thetas.empty()) break;
            s.advance_for_acquisition(pool, stage);
            for (const Vector& t : thetas) pool.submit(t, stage);
            ++stage;
            const std::vector<Job> done = pool.await_completions(static_cast<Index>(thetas.size()));
            for (const Job& j : done) failures = s.absorb(j, stage) ? 0 : failures + 1;
            if (failures >= cfg.max_failures) {
                s.abort("too many consecutive simulator failures: " + done.back().error);
                break;
            }
        }
    }
    s.finish(pool);
    return std::move(s.result());
}

RunResult run_batch(const RunConfig& cfg, const Problem& problem) {
    Session s(cfg, problem);
    WorkerPool pool = make_pool(cfg, problem, cfg.batch);
    if (s.initialize()) {
        Index stage = 0;
        Index failures = 0;
        while (s.budget_left() > 0 && !s.stopped()) {
            if (stage > 0) s.fit();
            const std::vector<Vector> thetas = s.acquire(cfg.batch);
            if (thetas.empty()) break;
            s.advance_for_acquisition(pool, stage);
            for (const Vector& t : thetas) pool.submit(t, stage);
            ++stage;
            const std::vector<Job> done = pool.await_completions(static_cast<Index>(thetas.size()));
            for (const Job& j : done) failures = s.absorb(j, stage) ? 0 : failures + 1;
            if (failures >= cfg.max_failures) {
                s.abort("too many consecutive simulator failures: " + done.back().error);
                break;
            }
        }
    }
    s.finish(pool);
    return std::move(s.result());
}

RunResult run_async(const RunConfig& cfg, const Problem& problem) {
    Session s(cfg, problem);
    WorkerPool pool = make_pool(cfg, problem, cfg.workers);
    if (s.initialize()) {
        ManagerLimits limits;
        limits.workers = cfg.workers;
        limits.trigger = cfg.trigger;
        limits.acquire = cfg.per_trigger;
        limits.budget = cfg.n;
        limits.max_failures = cfg.max_failures;
        ManagerCallbacks cb;
        Index last_fit_size = s.data().size();
        cb.acquire = [&](Index count, Index generation) {
            if (generation > 0 && s.data().size() != last_fit_size) {
                s.fit();
                last_fit_size = s.data().size();
            }
            return s.acquire(count);
        };
        cb.on_complete = [&](const Job& j) { (void)s.absorb(j, j.generation_id + 1); };
        cb.acquisition_time = [&](Index) { return cfg.acquisition_time; };
        const ManagerOutcome out = run_manager(pool, limits, cb);
        if (out.aborted) s.abort(out.reason);
    }
    s.finish(pool);
    return std::move(s.result());
}

RunResult run(const RunConfig& cfg, const Problem& problem) {
    switch (cfg.driver) {
        case Driver::sequential: return run_sequential(cfg, problem);
        case Driver::batch: return run_batch(cfg, problem);
        case Driver::async: return run_async(cfg, problem);
    }
    throw ConfigInvalid("unknown driver");
}

RunResult run(const RunConfig& cfg) { return run(cfg, make_problem(cfg.problem, cfg.problem_options)); }

}  // namespace eivar
