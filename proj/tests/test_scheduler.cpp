#include "eivar/scheduler.hpp"

#include <doctest.h>

#include <chrono>
#include <random>
#include <set>
#include <thread>

using namespace eivar;

namespace {

JobTrace run_table(Index k, Index c, Index a, Index jobs, std::vector<double> durations) {
    ScheduleConfig cfg;
    cfg.workers = k;
    cfg.trigger = c;
    cfg.acquire = a;
    cfg.jobs = jobs;
    cfg.durations = DurationModel::table(std::move(durations));
    return simulate_schedule(cfg);
}

void check_no_overlap(const JobTrace& t) {
    for (Index w = 1; w <= t.workers; ++w) {
        std::vector<std::pair<double, double>> iv;
        for (const Job& j : t.jobs) {
            if (j.worker_id == w) iv.emplace_back(j.start_time, j.end_time);
        }
        std::sort(iv.begin(), iv.end());
        for (std::size_t i = 1; i < iv.size(); ++i) CHECK(iv[i].first >= iv[i - 1].second);
    }
    for (const Job& j : t.jobs) {
        CHECK(j.start_time >= j.submit_time);
        CHECK(j.end_time >= j.start_time);
        CHECK(j.worker_id >= 1);
        CHECK(j.worker_id <= t.workers);
    }
}

// While a job waits in the queue every worker is busy.
void check_work_conserving(const JobTrace& t) {
    std::set<double> events;
    for (const Job& j : t.jobs) {
        events.insert(j.submit_time);
        events.insert(j.start_time);
        events.insert(j.end_time);
    }
    for (const Job& j : t.jobs) {
        for (double e : events) {
            if (e < j.submit_time || e >= j.start_time) continue;
            Index running = 0;
            for (const Job& o : t.jobs) running += (o.start_time <= e && e < o.end_time) ? 1 : 0;
            CHECK(running == t.workers);
        }
    }
}

std::vector<double> random_table(std::mt19937_64& rng, Index n) {
    std::lognormal_distribution<double> ln(0.0, 0.8);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = ln(rng);
    return v;
}

}  // namespace

TEST_CASE("single worker serializes jobs") {
    WorkerPool pool(1, ExecutionMode::simulated, DurationModel::table({2.0, 3.0}), nullptr);
    pool.submit(Vector(), 0);
    pool.submit(Vector(), 0);
    const auto done = pool.await_completions(2);
    CHECK(done[1].start_time == done[0].end_time);
    CHECK(done[1].end_time == 5.0);
}

TEST_CASE("two workers run in parallel and the freed worker takes the next job") {
    WorkerPool pool(2, ExecutionMode::simulated, DurationModel::table({1.0, 3.0, 1.0}), nullptr);
    pool.submit(Vector(), 0);
    pool.submit(Vector(), 0);
    pool.submit(Vector(), 0);
    const auto done = pool.await_completions(3);
    CHECK(done[0].id == 0);
    CHECK(done[0].end_time == 1.0);
    CHECK(done[1].id == 2);
    CHECK(done[1].start_time == 1.0);
    CHECK(done[1].worker_id == 1);
    CHECK(done[1].end_time == 2.0);
    CHECK(done[2].end_time == 3.0);
    CHECK(pool.outstanding() == 0);
}

TEST_CASE("completion ties are ordered by job id") {
    WorkerPool pool(3, ExecutionMode::simulated, DurationModel::constant(1.0), nullptr);
    for (int i = 0; i < 3; ++i) pool.submit(Vector(), 0);
    const auto done = pool.await_completions(3);
    for (Index i = 0; i < 3; ++i) CHECK(done[i].id == i);
}

TEST_CASE("deadlock, closed pool and empty trace") {
    WorkerPool pool(2, ExecutionMode::simulated, DurationModel::constant(1.0), nullptr);
    CHECK(pool.trace().jobs.empty());
    CHECK(pool.trace().makespan() == 0.0);
    CHECK_THROWS_AS((void)pool.await_completions(1), Deadlock);
    pool.submit(Vector(), 0);
    CHECK_THROWS_AS((void)pool.await_completions(2), Deadlock);
    CHECK(pool.await_completions(1).size() == 1);
    pool.close();
    CHECK_THROWS_AS(pool.submit(Vector(), 0), PoolClosed);
}

TEST_CASE("failed evaluations are reported as failed jobs") {
    WorkerPool pool(1, ExecutionMode::simulated, DurationModel::constant(1.0), [](const Vector& t) -> Vector {
        if (t(0) < 0) throw SimulatorFailure("negative");
        return t;
    });
    pool.submit(Vector::Constant(1, -1.0), 0);
    pool.submit(Vector::Constant(1, 2.0), 0);
    const auto done = pool.await_completions(2);
    CHECK(done[0].status == JobStatus::failed);
    CHECK(done[0].error == "negative");
    CHECK(done[1].status == JobStatus::done);
    CHECK(done[1].eta(0) == 2.0);
}

TEST_CASE("advance moves the clock and processes completions on the way") {
    WorkerPool pool(1, ExecutionMode::simulated, DurationModel::constant(1.0), nullptr);
    pool.submit(Vector(), 0);
    pool.advance(2.5);
    CHECK(pool.now() == 2.5);
    pool.submit(Vector(), 1);
    const auto done = pool.await_completions(2);
    CHECK(done[0].end_time == 1.0);
    CHECK(done[1].start_time == 2.5);
}

TEST_CASE("asynchronous reference table yields four generations after the initial batch") {
    const std::vector<double> table = {0.502, 6.824, 1.601, 1.146, 2.463, 0.052,
                                       4.092, 1.596, 0.688, 1.143, 1.431, 1.091};
    const JobTrace t = run_table(4, 2, 2, 12, table);
    REQUIRE(t.jobs.size() == 12);
    CHECK(t.generations() == 5);
    const std::vector<Index> expected = {0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4};
    for (std::size_t i = 0; i < 12; ++i) CHECK(t.jobs[i].generation_id == expected[i]);
    check_no_overlap(t);
}

TEST_CASE("synchronous reference table has boundaries after every fourth job") {
    const std::vector<double> table = {0.502, 6.824, 1.601, 1.146, 4.092, 1.585,
                                       2.463, 0.053, 0.464, 7.2,   0.688, 1.596};
    const JobTrace t = run_table(4, 4, 4, 12, table);
    CHECK(t.generations() == 3);
    for (std::size_t i = 0; i < 12; ++i) CHECK(t.jobs[i].generation_id == static_cast<Index>(i / 4));
    // Each generation starts when the slowest job of the previous one ends.
    CHECK(t.jobs[4].submit_time == doctest::Approx(6.824).epsilon(1e-12));
    CHECK(t.jobs[8].submit_time == doctest::Approx(6.824 + 4.092).epsilon(1e-12));
}

TEST_CASE("one straggler: synchronous makespan exceeds asynchronous") {
    // Hand simulation: sync ends at 10 + 1; async (c = a = 1) fills the other workers
    // and finishes with the straggler at 10.
    const std::vector<double> table = {10, 1, 1, 1, 1, 1, 1, 1};
    const JobTrace sync = run_table(4, 4, 4, 8, table);
    const JobTrace async = run_table(4, 1, 1, 8, table);
    CHECK(sync.makespan() == doctest::Approx(11.0));
    CHECK(async.makespan() == doctest::Approx(10.0));
    CHECK(sync.makespan() >= async.makespan());
}

TEST_CASE("one completion per trigger gives one generation per job past the first batch") {
    const JobTrace t = run_table(3, 1, 1, 10, {0.3, 1.7, 0.9, 1.1});
    CHECK(t.generations() == 1 + (10 - 3));
}

TEST_CASE("constant durations: sync and async traces coincide in time") {
    const JobTrace sync = run_table(4, 4, 4, 12, {1.0});
    const JobTrace async = run_table(4, 2, 2, 12, {1.0});
    REQUIRE(sync.jobs.size() == async.jobs.size());
    for (std::size_t i = 0; i < sync.jobs.size(); ++i) {
        CHECK(sync.jobs[i].start_time == async.jobs[i].start_time);
        CHECK(sync.jobs[i].end_time == async.jobs[i].end_time);
        CHECK(sync.jobs[i].worker_id == async.jobs[i].worker_id);
    }
}

TEST_CASE("random tables: invariants and idle-time ordering") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        const Index k = 2 + rep % 5;
        std::vector<Index> divisors;
        for (Index c = 1; c < k; ++c) {
            if (k % c == 0) divisors.push_back(c);
        }
        const Index c = divisors[static_cast<std::size_t>(rep) % divisors.size()];
        const Index jobs = k * (2 + rep % 4);
        const auto table = random_table(rng, jobs);
        const JobTrace sync = run_table(k, k, k, jobs, table);
        const JobTrace async = run_table(k, c, c, jobs, table);
        check_no_overlap(sync);
        check_no_overlap(async);
        check_work_conserving(sync);
        check_work_conserving(async);
        CHECK(sync.idle_time() >= async.idle_time() - 1e-9);
        CHECK(sync.jobs.size() == static_cast<std::size_t>(jobs));
        CHECK(async.jobs.size() == static_cast<std::size_t>(jobs));
    }
}

TEST_CASE("identical seeds give identical traces") {
    ScheduleConfig cfg;
    cfg.workers = 3;
    cfg.trigger = 2;
    cfg.acquire = 2;
    cfg.jobs = 15;
    cfg.durations = DurationModel::lognormal(0.0, 0.7, 42);
    cfg.acquisition_durations = {0.2, 0.1};
    const JobTrace a = simulate_schedule(cfg);
    const JobTrace b = simulate_schedule(cfg);
    REQUIRE(a.jobs.size() == b.jobs.size());
    for (std::size_t i = 0; i < a.jobs.size(); ++i) {
        CHECK(a.jobs[i].start_time == b.jobs[i].start_time);
        CHECK(a.jobs[i].end_time == b.jobs[i].end_time);
        CHECK(a.jobs[i].worker_id == b.jobs[i].worker_id);
        CHECK(a.jobs[i].generation_id == b.jobs[i].generation_id);
    }
    cfg.durations = DurationModel::lognormal(0.0, 0.7, 43);
    const JobTrace c = simulate_schedule(cfg);
    CHECK(c.jobs[0].end_time != a.jobs[0].end_time);
}

TEST_CASE("acquisition time delays the next generation") {
    ScheduleConfig cfg;
    cfg.workers = 2;
    cfg.trigger = 2;
    cfg.acquire = 2;
    cfg.jobs = 4;
    cfg.durations = DurationModel::constant(1.0);
    cfg.acquisition_durations = {0.5};
    const JobTrace t = simulate_schedule(cfg);
    CHECK(t.jobs[2].submit_time == 1.5);
    CHECK(t.makespan() == 2.5);
}

TEST_CASE("manager keeps the budget when jobs fail") {
    int calls = 0;
    WorkerPool pool(2, ExecutionMode::simulated, DurationModel::constant(1.0), [&](const Vector& t) -> Vector {
        if (t(0) == 1.0) throw SimulatorFailure("bad point");
        return t;
    });
    ManagerLimits lim;
    lim.workers = 2;
    lim.trigger = 1;
    lim.acquire = 1;
    lim.budget = 5;
    ManagerCallbacks cb;
    cb.acquire = [&](Index count, Index) {
        std::vector<Vector> out;
        for (Index i = 0; i < count; ++i) out.push_back(Vector::Constant(1, (calls++ % 3 == 1) ? 1.0 : 0.0));
        return out;
    };
    const ManagerOutcome out = run_manager(pool, lim, cb);
    CHECK(out.completed == 5);
    CHECK(out.failed > 0);
    CHECK_FALSE(out.aborted);

    WorkerPool bad(1, ExecutionMode::simulated, DurationModel::constant(1.0),
                   [](const Vector&) -> Vector { throw SimulatorFailure("always"); });
    lim.workers = 1;
    lim.max_failures = 3;
    cb.acquire = [](Index count, Index) { return std::vector<Vector>(static_cast<std::size_t>(count), Vector::Zero(1)); };
    const ManagerOutcome ab = run_manager(bad, lim, cb);
    CHECK(ab.aborted);
    CHECK(ab.failed == 3);
    CHECK(ab.completed == 0);
}

TEST_CASE("real mode runs jobs concurrently and reports every completion") {
    WorkerPool pool(3, ExecutionMode::real, DurationModel::constant(0.0), [](const Vector& t) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return Vector(2.0 * t);
    });
    for (int i = 0; i < 6; ++i) pool.submit(Vector::Constant(1, i), 0);
    const auto done = pool.await_completions(6);
    CHECK(done.size() == 6);
    for (const Job& j : done) CHECK(j.eta(0) == 2.0 * j.theta(0));
    const JobTrace t = pool.trace();
    check_no_overlap(t);
    // Three workers: six 20 ms jobs take about two rounds, not six.
    CHECK(t.makespan() < 0.11);

    WorkerPool failing(1, ExecutionMode::real, DurationModel::constant(0.0),
                       [](const Vector&) -> Vector { throw OutOfBounds("outside"); });
    failing.submit(Vector::Zero(1), 0);
    CHECK_THROWS_AS((void)failing.await_completions(1), OutOfBounds);
}
