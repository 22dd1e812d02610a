#include "eivar/scheduler.hpp"
#include "eivar/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eivar {

DurationModel DurationModel::constant(double value) {
    if (!(value >= 0.0)) throw ConfigInvalid("duration: constant must be nonnegative");
    DurationModel m;
    m.kind_ = Kind::constant;
    m.value_ = value;
    return m;
}

DurationModel DurationModel::lognormal(double mu, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ConfigInvalid("duration: lognormal sigma must be nonnegative");
    DurationModel m;
    m.kind_ = Kind::lognormal;
    m.mu_ = mu;
    m.sigma_ = sigma;
    m.seed_ = seed;
    return m;
}

DurationModel DurationModel::table(std::vector<double> values) {
    if (values.empty()) throw ConfigInvalid("duration: table must not be empty");
    for (double v : values) {
        if (!(v >= 0.0)) throw ConfigInvalid("duration: table entries must be nonnegative");
    }
    DurationModel m;
    m.kind_ = Kind::table;
    m.values_ = std::move(values);
    return m;
}

double DurationModel::sample(Index job_id) const {
    switch (kind_) {
        case Kind::constant: return value_;
        case Kind::table:
            return values_[static_cast<std::size_t>(job_id) % values_.size()];
        case Kind::lognormal: {
            Rng rng(derive_seed(seed_, 0x64757261, static_cast<std::uint64_t>(job_id)));
            std::normal_distribution<double> n01;
            return std::exp(mu_ + sigma_ * n01(rng));
        }
    }
    return value_;
}

std::string to_string(JobStatus s) {
    switch (s) {
        case JobStatus::pending: return "pending";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "?";
}

double JobTrace::makespan() const {
    double m = 0.0;
    for (const Job& j : jobs) {
        if (j.status == JobStatus::done || j.status == JobStatus::failed) m = std::max(m, j.end_time);
    }
    return m;
}

double JobTrace::busy_time() const {
    double b = 0.0;
    for (const Job& j : jobs) {
        if (j.status == JobStatus::done || j.status == JobStatus::failed) b += j.end_time - j.start_time;
    }
    return b;
}

double JobTrace::idle_time() const {
    return static_cast<double>(workers) * makespan() - busy_time();
}

Index JobTrace::generations() const {
    Index g = 0;
    for (const Job& j : jobs) g = std::max(g, j.generation_id + 1);
    return g;
}

WorkerPool::WorkerPool(Index workers, ExecutionMode mode, DurationModel durations,
                       Evaluator evaluate)
    : k_(workers), mode_(mode), durations_(std::move(durations)), evaluate_(std::move(evaluate)) {
    if (k_ < 1) throw ConfigInvalid("scheduler: need at least one worker");
    worker_job_.assign(static_cast<std::size_t>(k_), -1);
    origin_ = std::chrono::steady_clock::now();
    if (mode_ == ExecutionMode::real) {
        for (Index w = 0; w < k_; ++w) threads_.emplace_back([this, w] { worker_loop(w); });
    }
}

WorkerPool::~WorkerPool() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
}

double WorkerPool::wall_now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
}

Index WorkerPool::submit(const Vector& theta, Index generation) {
    std::unique_lock lock(mu_);
    if (closed_) throw PoolClosed("scheduler: submit on a closed pool");
    Job job;
    job.id = static_cast<Index>(jobs_.size());
    job.theta = theta;
    job.generation_id = generation;
    job.submit_time = mode_ == ExecutionMode::simulated ? clock_ : wall_now();
    jobs_.push_back(job);
    queue_.push_back(job.id);
    if (mode_ == ExecutionMode::simulated) {
        dispatch_simulated();
    } else {
        lock.unlock();
        cv_.notify_all();
    }
    return job.id;
}

void WorkerPool::dispatch_simulated() {
    while (!queue_.empty()) {
        const auto idle = std::find(worker_job_.begin(), worker_job_.end(), Index{-1});
        if (idle == worker_job_.end()) return;
        const auto w = static_cast<std::size_t>(idle - worker_job_.begin());
        const Index id = queue_.front();
        queue_.pop_front();
        Job& job = jobs_[static_cast<std::size_t>(id)];
        job.worker_id = static_cast<Index>(w) + 1;
        job.start_time = clock_;
        job.end_time = clock_ + durations_.sample(id);
        job.status = JobStatus::running;
        worker_job_[w] = id;
    }
}

bool WorkerPool::step_simulated() {
    std::size_t best_w = worker_job_.size();
    for (std::size_t w = 0; w < worker_job_.size(); ++w) {
        const Index id = worker_job_[w];
        if (id < 0) continue;
        if (best_w == worker_job_.size()) {
            best_w = w;
            continue;
        }
        const Job& a = jobs_[static_cast<std::size_t>(id)];
        const Job& b = jobs_[static_cast<std::size_t>(worker_job_[best_w])];
        if (a.end_time < b.end_time || (a.end_time == b.end_time && a.id < b.id)) best_w = w;
    }
    if (best_w == worker_job_.size()) return false;
    Job& job = jobs_[static_cast<std::size_t>(worker_job_[best_w])];
    clock_ = std::max(clock_, job.end_time);
    try {
        job.eta = evaluate_ ? evaluate_(job.theta) : Vector();
        job.status = JobStatus::done;
    } catch (const SimulatorFailure& e) {
        job.status = JobStatus::failed;
        job.error = e.what();
    }
    worker_job_[best_w] = -1;
    finished_.push_back(job.id);
    dispatch_simulated();
    return true;
}

void WorkerPool::run_until_simulated(double t) {
    for (;;) {
        double next = std::numeric_limits<double>::infinity();
        for (Index id : worker_job_) {
            if (id >= 0) next = std::min(next, jobs_[static_cast<std::size_t>(id)].end_time);
        }
        if (next > t) break;
        step_simulated();
    }
    clock_ = std::max(clock_, t);
}

void WorkerPool::worker_loop(Index worker) {
    std::unique_lock lock(mu_);
    for (;;) {
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        const Index id = queue_.front();
        queue_.pop_front();
        Job& job = jobs_[static_cast<std::size_t>(id)];
        job.worker_id = worker + 1;
        job.start_time = wall_now();
        job.status = JobStatus::running;
        worker_job_[static_cast<std::size_t>(worker)] = id;
        const Vector theta = job.theta;
        lock.unlock();
        Vector eta;
        std::string error;
        bool ok = true;
        std::exception_ptr fatal;
        try {
            eta = evaluate_ ? evaluate_(theta) : Vector();
        } catch (const SimulatorFailure& e) {
            ok = false;
            error = e.what();
        } catch (...) {
            ok = false;
            fatal = std::current_exception();
        }
        lock.lock();
        Job& done = jobs_[static_cast<std::size_t>(id)];
        done.end_time = wall_now();
        done.eta = std::move(eta);
        done.error = std::move(error);
        done.status = ok ? JobStatus::done : JobStatus::failed;
        if (fatal && !fatal_) fatal_ = fatal;
        worker_job_[static_cast<std::size_t>(worker)] = -1;
        finished_.push_back(id);
        cv_.notify_all();
    }
}

std::vector<Job> WorkerPool::await_completions(Index c) {
    std::unique_lock lock(mu_);
    const Index unreported = static_cast<Index>(finished_.size()) - reported_;
    Index running = 0;
    for (Index id : worker_job_) running += id >= 0 ? 1 : 0;
    const Index available = unreported + running + static_cast<Index>(queue_.size());
    if (c < 1) return {};
    if (available == 0) throw Deadlock("scheduler: waiting for completions with no jobs outstanding");
    if (c > available) throw Deadlock("scheduler: waiting for more completions than jobs outstanding");
    if (mode_ == ExecutionMode::simulated) {
        while (static_cast<Index>(finished_.size()) - reported_ < c) step_simulated();
    } else {
        cv_.wait(lock, [&] { return fatal_ || static_cast<Index>(finished_.size()) - reported_ >= c; });
        if (fatal_) std::rethrow_exception(fatal_);
        clock_ = wall_now();
    }
    std::vector<Job> out;
    out.reserve(static_cast<std::size_t>(c));
    for (Index i = 0; i < c; ++i) {
        out.push_back(jobs_[static_cast<std::size_t>(finished_[static_cast<std::size_t>(reported_ + i)])]);
    }
    reported_ += c;
    if (mode_ == ExecutionMode::real) {
        std::stable_sort(out.begin(), out.end(), [](const Job& a, const Job& b) {
            return a.end_time < b.end_time || (a.end_time == b.end_time && a.id < b.id);
        });
    }
    return out;
}

void WorkerPool::advance(double dt) {
    if (mode_ != ExecutionMode::simulated || dt <= 0.0) return;
    std::lock_guard lock(mu_);
    run_until_simulated(clock_ + dt);
}

double WorkerPool::now() const {
    std::lock_guard lock(mu_);
    return mode_ == ExecutionMode::simulated ? clock_ : wall_now();
}

Index WorkerPool::outstanding() const {
    std::lock_guard lock(mu_);
    Index running = 0;
    for (Index id : worker_job_) running += id >= 0 ? 1 : 0;
    return static_cast<Index>(finished_.size()) - reported_ + running +
           static_cast<Index>(queue_.size());
}

void WorkerPool::close() {
    std::lock_guard lock(mu_);
    closed_ = true;
}

JobTrace WorkerPool::trace() const {
    std::lock_guard lock(mu_);
    return {k_, jobs_};
}

ManagerOutcome run_manager(WorkerPool& pool, const ManagerLimits& limits,
                           const ManagerCallbacks& callbacks) {
    if (limits.trigger < 1 || limits.trigger > limits.workers || limits.acquire < 1) {
        throw ConfigInvalid("scheduler: need 1 <= trigger <= workers and acquire >= 1");
    }
    ManagerOutcome out;
    Index in_flight = 0;
    Index generation = 0;
    Index consecutive_failures = 0;

    auto launch = [&](Index count) {
        const std::vector<Vector> thetas = callbacks.acquire(count, generation);
        if (generation > 0 && callbacks.acquisition_time) {
            pool.advance(callbacks.acquisition_time(generation));
        }
        for (const Vector& t : thetas) pool.submit(t, generation);
        in_flight += static_cast<Index>(thetas.size());
    };

    const Index first = std::min(limits.workers, limits.budget);
    if (first > 0) launch(first);
    while (out.completed < limits.budget) {
        if (in_flight == 0) {
            // every outstanding job failed; acquire replacements straight away
            if (callbacks.on_trigger) callbacks.on_trigger();
            ++generation;
            launch(std::min(limits.acquire, limits.budget - out.completed));
            if (in_flight == 0) break;
            continue;
        }
        const Index need = std::min(limits.trigger, in_flight);
        const std::vector<Job> done = pool.await_completions(need);
        in_flight -= need;
        for (const Job& j : done) {
            if (j.status == JobStatus::done) {
                ++out.completed;
                consecutive_failures = 0;
            } else {
                ++out.failed;
                ++consecutive_failures;
            }
            if (callbacks.on_complete) callbacks.on_complete(j);
        }
        if (consecutive_failures >= limits.max_failures) {
            out.aborted = true;
            out.reason = "too many consecutive simulator failures: " + done.back().error;
            return out;
        }
        const Index remaining = limits.budget - out.completed - in_flight;
        if (remaining > 0) {
            if (callbacks.on_trigger) callbacks.on_trigger();
            ++generation;
            launch(std::min(limits.acquire, remaining));
        }
    }
    return out;
}

JobTrace simulate_schedule(const ScheduleConfig& cfg) {
    WorkerPool pool(cfg.workers, ExecutionMode::simulated, cfg.durations, nullptr);
    ManagerLimits limits;
    limits.workers = cfg.workers;
    limits.trigger = cfg.trigger;
    limits.acquire = cfg.acquire;
    limits.budget = cfg.jobs;
    ManagerCallbacks cb;
    cb.acquire = [](Index count, Index) { return std::vector<Vector>(static_cast<std::size_t>(count)); };
    cb.acquisition_time = [&](Index g) {
        if (cfg.acquisition_durations.empty()) return 0.0;
        return cfg.acquisition_durations[static_cast<std::size_t>(g - 1) % cfg.acquisition_durations.size()];
    };
    (void)run_manager(pool, limits, cb);
    return pool.trace();
}

}  // namespace eivar
