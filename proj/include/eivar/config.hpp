#ifndef EIVAR_CONFIG_HPP
#define EIVAR_CONFIG_HPP

#include "eivar/designer.hpp"
#include "eivar/problems.hpp"
#include "eivar/scheduler.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace eivar {

/// External simulator section of an experiment file.
struct ExternalProblemConfig {
    ExternalSimulator simulator;
    Vector lower;
    Vector upper;
    Vector y;
    Matrix sigma;
    Index n0 = 10;
};

struct ExperimentConfig {
    RunConfig run;
    std::optional<ExternalProblemConfig> external;
    std::string output_dir = "out";
    std::vector<std::uint64_t> replicate_seeds;
    std::vector<AcquisitionKind> replicate_acquisitions;  // empty means run.acquisition only
};

struct ScheduleFileConfig {
    ScheduleConfig schedule;
    std::string output_dir = "out";
};

/// Parses and validates; every error is ConfigInvalid naming the offending field.
[[nodiscard]] ExperimentConfig parse_experiment(const nlohmann::json& doc);
[[nodiscard]] ExperimentConfig load_experiment(const std::filesystem::path& path);
/// Full configuration with defaults filled in; parses back to the same run.
[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& cfg);

[[nodiscard]] ScheduleFileConfig parse_schedule(const nlohmann::json& doc);
[[nodiscard]] ScheduleFileConfig load_schedule(const std::filesystem::path& path);
[[nodiscard]] nlohmann::json to_json(const ScheduleFileConfig& cfg);

/// Dotted paths of every key the parsers accept.
[[nodiscard]] std::vector<std::string> experiment_key_paths();
[[nodiscard]] std::vector<std::string> schedule_key_paths();

[[nodiscard]] Problem make_problem(const ExperimentConfig& cfg);

[[nodiscard]] nlohmann::json to_json(const DurationModel& m);

/// Shortest round-trip decimal form.
[[nodiscard]] std::string format_number(double x);

void write_acquisitions_csv(const std::filesystem::path& path, const RunResult& r);
void write_mad_trace_csv(const std::filesystem::path& path, const RunResult& r);
void write_jobs_trace_csv(const std::filesystem::path& path, const JobTrace& t);
/// Writes the three CSVs and summary.json into dir.
void write_run_outputs(const std::filesystem::path& dir, const RunResult& r,
                       const ExperimentConfig& cfg);

struct MadQuantileRow {
    std::string acquisition;
    Index eval_index = 0;
    double q05 = 0.0;
    double median = 0.0;
    double q95 = 0.0;
};

/// Per-index quantiles over replicate traces; indices missing from a trace are skipped.
[[nodiscard]] std::vector<MadQuantileRow> mad_quantiles(const std::string& acquisition,
                                                        const std::vector<std::vector<double>>& traces);
void write_mad_quantiles_csv(const std::filesystem::path& path,
                             const std::vector<MadQuantileRow>& rows);

}  // namespace eivar

#endif
