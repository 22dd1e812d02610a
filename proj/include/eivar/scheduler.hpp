#ifndef EIVAR_SCHEDULER_HPP
#define EIVAR_SCHEDULER_HPP

#include "eivar/common.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace eivar {

/// Job runtime law for the simulated clock. Draws depend only on the job id.
class DurationModel {
public:
    enum class Kind { constant, lognormal, table };

    static DurationModel constant(double value);
    static DurationModel lognormal(double mu, double sigma, std::uint64_t seed);
    /// Entry i is the duration of job i; ids past the end wrap around.
    static DurationModel table(std::vector<double> values);

    [[nodiscard]] double sample(Index job_id) const;
    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] double value() const { return value_; }
    [[nodiscard]] double mu() const { return mu_; }
    [[nodiscard]] double sigma() const { return sigma_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const std::vector<double>& values() const { return values_; }

private:
    Kind kind_ = Kind::constant;
    double value_ = 1.0;
    double mu_ = 0.0;
    double sigma_ = 0.0;
    std::uint64_t seed_ = 0;
    std::vector<double> values_;
};

enum class JobStatus { pending, running, done, failed };
[[nodiscard]] std::string to_string(JobStatus s);

struct Job {
    Index id = 0;
    Vector theta;
    double submit_time = 0.0;
    double start_time = 0.0;
    double end_time = 0.0;
    Index worker_id = -1;
    Index generation_id = 0;
    JobStatus status = JobStatus::pending;
    Vector eta;
    std::string error;
};

struct JobTrace {
    Index workers = 0;
    std::vector<Job> jobs;  // ordered by id

    [[nodiscard]] double makespan() const;
    [[nodiscard]] double busy_time() const;
    /// workers * makespan minus total busy time.
    [[nodiscard]] double idle_time() const;
    [[nodiscard]] Index generations() const;
};

enum class ExecutionMode { simulated, real };

/// Manager side of a manager-worker pool. Worker ids run from 1 to k.
class WorkerPool {
public:
    using Evaluator = std::function<Vector(const Vector&)>;

    WorkerPool(Index workers, ExecutionMode mode, DurationModel durations, Evaluator evaluate);
    ~WorkerPool();
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    /// Queues a job FIFO and returns its id.
    Index submit(const Vector& theta, Index generation);
    /// Next c completions ordered by end time, ties by id.
    std::vector<Job> await_completions(Index c);
    /// Moves the simulated clock forward, e.g. for acquisition work. No-op in real mode.
    void advance(double dt);
    [[nodiscard]] double now() const;
    [[nodiscard]] Index outstanding() const;
    [[nodiscard]] Index workers() const { return k_; }
    [[nodiscard]] ExecutionMode mode() const { return mode_; }
    void close();
    [[nodiscard]] JobTrace trace() const;

private:
    Index k_;
    ExecutionMode mode_;
    DurationModel durations_;
    Evaluator evaluate_;
    bool closed_ = false;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::vector<Job> jobs_;
    std::deque<Index> queue_;           // waiting job ids
    std::vector<Index> worker_job_;     // job running on each worker, -1 when idle
    std::vector<Index> finished_;       // completion order; the first reported_ were returned
    Index reported_ = 0;
    double clock_ = 0.0;

    // real mode
    std::vector<std::thread> threads_;
    bool stopping_ = false;
    std::chrono::steady_clock::time_point origin_;
    std::exception_ptr fatal_;  // non-simulator error raised by a worker

    void dispatch_simulated();
    void run_until_simulated(double t);
    bool step_simulated();
    void worker_loop(Index worker);
    double wall_now() const;
};

/// Callbacks driving the trigger loop with k workers, c completions per trigger, a per trigger.
struct ManagerCallbacks {
    /// Returns `count` parameters for generation `generation`.
    std::function<std::vector<Vector>(Index count, Index generation)> acquire;
    /// Called for each completed or failed job in completion order.
    std::function<void(const Job&)> on_complete;
    /// Called after each trigger's completions are absorbed, before acquisition.
    std::function<void()> on_trigger;
    /// Simulated acquisition time for a generation; zero when unset.
    std::function<double(Index generation)> acquisition_time;
};

struct ManagerLimits {
    Index workers = 1;
    Index trigger = 1;
    Index acquire = 1;
    Index budget = 0;             // successful evaluations to collect
    Index max_failures = 16;      // consecutive failed jobs before giving up
};

struct ManagerOutcome {
    Index completed = 0;
    Index failed = 0;
    bool aborted = false;
    std::string reason;
};

/// Runs the manager loop: k initial jobs, then a new jobs after every c completions
/// until `budget` evaluations finish. Failed jobs do not consume budget.
ManagerOutcome run_manager(WorkerPool& pool, const ManagerLimits& limits,
                           const ManagerCallbacks& callbacks);

struct ScheduleConfig {
    Index workers = 4;
    Index trigger = 4;
    Index acquire = 4;
    Index jobs = 12;
    DurationModel durations = DurationModel::constant(1.0);
    std::vector<double> acquisition_durations;  // per generation >= 1; empty means zero
};

/// Pure scheduling simulation with no emulator.
[[nodiscard]] JobTrace simulate_schedule(const ScheduleConfig& cfg);

}  // namespace eivar

#endif
