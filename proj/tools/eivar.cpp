#include "eivar/config.hpp"
#include "eivar/designer.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

namespace {

using namespace eivar;
namespace fs = std::filesystem;

enum class Level { error = 0, info = 1, debug = 2 };

Level log_level() {
    const char* env = std::getenv("EIVAR_LOG");
    if (!env) return Level::info;
    const std::string v(env);
    if (v == "error") return Level::error;
    if (v == "debug") return Level::debug;
    return Level::info;
}

std::mutex log_mutex;

void log(Level level, const std::string& msg) {
    static const Level threshold = log_level();
    if (level > threshold) return;
    static const char* names[] = {"error", "info", "debug"};
    std::lock_guard lock(log_mutex);
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

constexpr int kOk = 0;
constexpr int kOther = 1;
constexpr int kConfig = 2;
constexpr int kSimulator = 3;
constexpr int kNumerical = 4;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigInvalid*>(&e)) return kConfig;
    if (dynamic_cast<const SimulatorFailure*>(&e)) return kSimulator;
    if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
    return kOther;
}

std::string describe(const RunResult& r) {
    std::string s = std::to_string(r.acquisitions.size()) + " acquisitions";
    if (!r.mad_trace.empty()) s += ", final MAD " + format_number(r.mad_trace.back());
    return s;
}

int run_one(const ExperimentConfig& cfg, const fs::path& dir, RunResult* keep = nullptr) {
    const Problem problem = make_problem(cfg);
    log(Level::debug, "run " + cfg.run.problem + " " + to_string(cfg.run.acquisition) + " seed " +
                          std::to_string(cfg.run.seed));
    RunResult r = run(cfg.run, problem);
    write_run_outputs(dir, r, cfg);
    log(Level::info, dir.string() + ": " + describe(r));
    const int code = r.aborted ? kSimulator : kOk;
    if (r.aborted) log(Level::error, dir.string() + ": aborted: " + r.reason);
    if (keep) *keep = std::move(r);
    return code;
}

int cmd_run(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
    ExperimentConfig cfg = load_experiment(config);
    if (seed) cfg.run.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    return run_one(cfg, cfg.output_dir);
}

int cmd_replicate(const std::string& config, const std::string& out,
                  std::optional<std::uint64_t> seed, int jobs) {
    ExperimentConfig cfg = load_experiment(config);
    if (!out.empty()) cfg.output_dir = out;
    std::vector<std::uint64_t> seeds = cfg.replicate_seeds;
    if (seeds.empty()) seeds.push_back(cfg.run.seed);
    if (seed) {
        for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = *seed + i;
    }
    std::vector<AcquisitionKind> kinds = cfg.replicate_acquisitions;
    if (kinds.empty()) kinds.push_back(cfg.run.acquisition);

    struct Task {
        AcquisitionKind kind;
        std::uint64_t seed;
        std::vector<double> trace;
        int code = kOk;
    };
    std::vector<Task> tasks;
    for (auto k : kinds) {
        for (auto s : seeds) tasks.push_back({k, s, {}, kOk});
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            Task& t = tasks[i];
            ExperimentConfig c = cfg;
            c.run.acquisition = t.kind;
            c.run.seed = t.seed;
            c.replicate_seeds.clear();
            c.replicate_acquisitions.clear();
            const fs::path dir = fs::path(cfg.output_dir) / to_string(t.kind) / ("seed_" + std::to_string(t.seed));
            c.output_dir = dir.string();
            try {
                RunResult r;
                t.code = run_one(c, dir, &r);
                t.trace = r.mad_trace;
            } catch (const std::exception& e) {
                log(Level::error, dir.string() + ": " + e.what());
                t.code = exit_code_for(e);
            }
        }
    };
    const int n_threads = std::max(1, std::min(jobs, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    std::vector<MadQuantileRow> rows;
    for (auto k : kinds) {
        std::vector<std::vector<double>> traces;
        for (const Task& t : tasks) {
            if (t.kind == k && t.code == kOk) traces.push_back(t.trace);
        }
        const auto q = mad_quantiles(to_string(k), traces);
        rows.insert(rows.end(), q.begin(), q.end());
    }
    fs::create_directories(cfg.output_dir);
    write_mad_quantiles_csv(fs::path(cfg.output_dir) / "mad_quantiles.csv", rows);
    for (const Task& t : tasks) {
        if (t.code != kOk) return t.code;
    }
    return kOk;
}

int cmd_schedule(const std::string& config, const std::string& out) {
    ScheduleFileConfig cfg = load_schedule(config);
    if (!out.empty()) cfg.output_dir = out;
    const JobTrace trace = simulate_schedule(cfg.schedule);
    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    write_jobs_trace_csv(dir / "jobs_trace.csv", trace);
    nlohmann::json s;
    s["workers"] = trace.workers;
    s["jobs"] = static_cast<Index>(trace.jobs.size());
    s["generations"] = trace.generations();
    s["makespan"] = trace.makespan();
    s["busy_time"] = trace.busy_time();
    s["idle_time"] = trace.idle_time();
    s["config"] = to_json(cfg);
    std::ofstream f(dir / "schedule_summary.json", std::ios::binary);
    f << s.dump(2) << '\n';
    log(Level::info, dir.string() + ": makespan " + format_number(trace.makespan()) + ", idle " +
                         format_number(trace.idle_time()));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential and batched experimental design for simulation calibration"};
    app.require_subcommand(1);
    std::string config, out;
    std::optional<std::uint64_t> seed;
    int jobs = 1;

    auto* run = app.add_subcommand("run", "Run one experiment");
    auto* rep = app.add_subcommand("replicate", "Run an experiment over a list of seeds");
    auto* sch = app.add_subcommand("schedule", "Simulate a worker schedule without an emulator");
    for (auto* sub : {run, rep, sch}) {
        sub->add_option("--config", config, "Configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "Output directory (overrides the file)");
    }
    run->add_option("--seed", seed, "Seed (overrides the file)");
    rep->add_option("--seed", seed, "First seed; replicates use consecutive seeds from it");
    rep->add_option("--jobs", jobs, "Replicates run concurrently")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfig;
    }

    try {
        if (*run) return cmd_run(config, out, seed);
        if (*rep) return cmd_replicate(config, out, seed, jobs);
        if (*sch) return cmd_schedule(config, out);
    } catch (const std::exception& e) {
        log(Level::error, e.what());
        return exit_code_for(e);
    }
    return kOther;
}
