#include "eivar/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace eivar {

using nlohmann::json;

namespace {

const std::vector<std::string> kDurationKeys = {"kind", "value", "mu", "sigma", "seed", "values"};

std::vector<std::string> with_prefix(const std::string& prefix, const std::vector<std::string>& keys) {
    std::vector<std::string> out;
    for (const auto& k : keys) out.push_back(prefix + "." + k);
    return out;
}

const std::vector<std::string>& experiment_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k = {
            "problem", "problem_options", "problem_options.prior_sd", "acquisition", "driver", "n0",
            "n", "batch", "workers", "trigger", "per_trigger", "candidates", "reference",
            "reference.grid_per_dim", "reference.max_grid_dim", "reference.lhs_size", "seed",
            "pending_rule", "stopping", "stopping.mad_threshold", "stopping.holdout_size",
            "variance_fraction", "full_refit_interval", "fit_starts", "unknown_covariance",
            "fix_sigma_b_zero", "mode", "durations", "acquisition_time", "max_failures", "external",
            "external.command", "external.timeout_seconds", "external.lower", "external.upper",
            "external.y", "external.sigma", "output_dir", "replicate", "replicate.seeds",
            "replicate.acquisitions"};
        for (auto& d : with_prefix("durations", kDurationKeys)) k.push_back(d);
        return k;
    }();
    return keys;
}

const std::vector<std::string>& schedule_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k = {"workers", "trigger", "acquire", "jobs", "durations",
                                      "acquisition_durations", "output_dir"};
        for (auto& d : with_prefix("durations", kDurationKeys)) k.push_back(d);
        return k;
    }();
    return keys;
}

/// Read-only view of one JSON object that rejects keys outside the allowed table.
class Section {
public:
    Section(const json& j, std::string path, const std::vector<std::string>& table)
        : j_(j), path_(std::move(path)), table_(table) {
        if (!j_.is_object()) fail(path_.empty() ? "document" : path_, "must be an object");
        const std::string prefix = path_.empty() ? "" : path_ + ".";
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            const std::string full = prefix + it.key();
            if (std::find(table_.begin(), table_.end(), full) == table_.end()) {
                fail(full, "unknown key");
            }
        }
    }

    [[noreturn]] static void fail(const std::string& field, const std::string& what) {
        throw ConfigInvalid(field + ": " + what);
    }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const json& at(const std::string& key) const { return j_.at(key); }

    Section sub(const std::string& key) const { return Section(j_.at(key), field(key), table_); }

    std::string str(const std::string& key, const std::string& def) const {
        if (!has(key)) return def;
        if (!at(key).is_string()) fail(field(key), "must be a string");
        return at(key).get<std::string>();
    }
    double num(const std::string& key, double def) const {
        if (!has(key)) return def;
        if (!at(key).is_number()) fail(field(key), "must be a number");
        const double v = at(key).get<double>();
        if (!std::isfinite(v)) fail(field(key), "must be finite");
        return v;
    }
    Index integer(const std::string& key, Index def) const {
        if (!has(key)) return def;
        if (!at(key).is_number_integer()) fail(field(key), "must be an integer");
        return at(key).get<Index>();
    }
    std::uint64_t seed(const std::string& key, std::uint64_t def) const {
        if (!has(key)) return def;
        if (!at(key).is_number_unsigned()) fail(field(key), "must be a nonnegative integer");
        return at(key).get<std::uint64_t>();
    }
    bool boolean(const std::string& key, bool def) const {
        if (!has(key)) return def;
        if (!at(key).is_boolean()) fail(field(key), "must be true or false");
        return at(key).get<bool>();
    }
    Vector vec(const std::string& key) const {
        const json& a = at(key);
        if (!a.is_array()) fail(field(key), "must be an array of numbers");
        Vector v(static_cast<Index>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_number()) fail(field(key), "must be an array of numbers");
            v(static_cast<Index>(i)) = a[i].get<double>();
        }
        return v;
    }
    Matrix mat(const std::string& key) const {
        const json& a = at(key);
        if (!a.is_array() || a.empty() || !a[0].is_array()) fail(field(key), "must be an array of rows");
        const std::size_t cols = a[0].size();
        Matrix m(static_cast<Index>(a.size()), static_cast<Index>(cols));
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_array() || a[i].size() != cols) fail(field(key), "rows must have equal length");
            for (std::size_t j = 0; j < cols; ++j) {
                if (!a[i][j].is_number()) fail(field(key), "entries must be numbers");
                m(static_cast<Index>(i), static_cast<Index>(j)) = a[i][j].get<double>();
            }
        }
        return m;
    }

private:
    const json& j_;
    std::string path_;
    const std::vector<std::string>& table_;
};

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) Section::fail(field, what);
}

DurationModel parse_durations(const Section& s) {
    const std::string kind = s.str("kind", "constant");
    if (kind == "constant") {
        const double v = s.num("value", 1.0);
        require(v >= 0.0, s.field("value"), "must be nonnegative");
        return DurationModel::constant(v);
    }
    if (kind == "lognormal") {
        const double sigma = s.num("sigma", 0.5);
        require(sigma >= 0.0, s.field("sigma"), "must be nonnegative");
        return DurationModel::lognormal(s.num("mu", 0.0), sigma, s.seed("seed", 0));
    }
    if (kind == "table") {
        require(s.has("values"), s.field("values"), "required for a table");
        const Vector v = s.vec("values");
        require(v.size() > 0 && (v.array() >= 0.0).all(), s.field("values"),
                "must be a nonempty list of nonnegative durations");
        return DurationModel::table(std::vector<double>(v.data(), v.data() + v.size()));
    }
    Section::fail(s.field("kind"), "unknown value '" + kind + "'");
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out + "\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    return f;
}

}  // namespace

std::vector<std::string> experiment_key_paths() { return experiment_keys(); }
std::vector<std::string> schedule_key_paths() { return schedule_keys(); }

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

json to_json(const DurationModel& m) {
    switch (m.kind()) {
        case DurationModel::Kind::constant: return {{"kind", "constant"}, {"value", m.value()}};
        case DurationModel::Kind::lognormal:
            return {{"kind", "lognormal"}, {"mu", m.mu()}, {"sigma", m.sigma()}, {"seed", m.seed()}};
        case DurationModel::Kind::table: return {{"kind", "table"}, {"values", m.values()}};
    }
    return {};
}

ExperimentConfig parse_experiment(const json& doc) {
    const Section s(doc, "", experiment_keys());
    ExperimentConfig cfg;
    RunConfig& r = cfg.run;
    r.problem = s.str("problem", r.problem);
    if (s.has("problem_options")) {
        const Section po = s.sub("problem_options");
        r.problem_options.prior_sd = po.num("prior_sd", r.problem_options.prior_sd);
        require(r.problem_options.prior_sd > 0.0, "problem_options.prior_sd", "must be positive");
    }
    if (s.has("external")) {
        const Section e = s.sub("external");
        ExternalProblemConfig ex;
        require(e.has("command") && e.at("command").is_array() && !e.at("command").empty(),
                "external.command", "must be a nonempty array of strings");
        for (const auto& a : e.at("command")) {
            require(a.is_string(), "external.command", "must be a nonempty array of strings");
            ex.simulator.command.push_back(a.get<std::string>());
        }
        ex.simulator.timeout_seconds = e.num("timeout_seconds", ex.simulator.timeout_seconds);
        require(ex.simulator.timeout_seconds > 0.0, "external.timeout_seconds", "must be positive");
        for (const char* k : {"lower", "upper", "y", "sigma"}) {
            require(e.has(k), std::string("external.") + k, "required");
        }
        ex.lower = e.vec("lower");
        ex.upper = e.vec("upper");
        ex.y = e.vec("y");
        ex.sigma = e.mat("sigma");
        require(ex.lower.size() == ex.upper.size() && ex.lower.size() > 0 &&
                    (ex.lower.array() < ex.upper.array()).all(),
                "external.upper", "must exceed external.lower coordinatewise");
        require(ex.sigma.rows() == ex.y.size() && ex.sigma.cols() == ex.y.size(), "external.sigma",
                "must be a d x d matrix matching external.y");
        cfg.external = std::move(ex);
        if (!s.has("problem")) r.problem = "external";
    } else {
        const auto names = problem_names();
        require(std::find(names.begin(), names.end(), r.problem) != names.end(), "problem",
                "unknown value '" + r.problem + "'");
    }
    if (s.has("acquisition")) {
        try {
            r.acquisition = parse_acquisition(s.str("acquisition", ""));
        } catch (const ConfigInvalid& e) {
            Section::fail("acquisition", e.what());
        }
    }
    if (s.has("driver")) {
        try {
            r.driver = parse_driver(s.str("driver", ""));
        } catch (const ConfigInvalid&) {
            Section::fail("driver", "unknown value '" + s.str("driver", "") + "'");
        }
    }
    const Index default_n0 = cfg.external ? 10 : make_problem(r.problem, r.problem_options).default_n0;
    r.n0 = s.integer("n0", default_n0);
    r.n = s.integer("n", r.n);
    r.batch = s.integer("batch", r.batch);
    r.workers = s.integer("workers", r.workers);
    r.trigger = s.integer("trigger", r.trigger);
    r.per_trigger = s.integer("per_trigger", r.per_trigger);
    r.candidates = s.integer("candidates", r.candidates);
    if (s.has("reference")) {
        const Section rs = s.sub("reference");
        r.reference.grid_per_dim = rs.integer("grid_per_dim", r.reference.grid_per_dim);
        r.reference.max_grid_dim = rs.integer("max_grid_dim", r.reference.max_grid_dim);
        r.reference.lhs_size = rs.integer("lhs_size", r.reference.lhs_size);
        require(r.reference.grid_per_dim >= 2, "reference.grid_per_dim", "must be at least 2");
        require(r.reference.lhs_size >= 1, "reference.lhs_size", "must be positive");
        require(r.reference.max_grid_dim >= 0, "reference.max_grid_dim", "must be nonnegative");
    }
    r.seed = s.seed("seed", r.seed);
    if (s.has("pending_rule")) {
        try {
            r.pending_rule = parse_pending_rule(s.str("pending_rule", ""));
        } catch (const ConfigInvalid&) {
            Section::fail("pending_rule", "unknown value '" + s.str("pending_rule", "") + "'");
        }
    }
    if (s.has("stopping")) {
        const Section st = s.sub("stopping");
        if (st.has("mad_threshold")) {
            r.stopping.mad_threshold = st.num("mad_threshold", 0.0);
            require(*r.stopping.mad_threshold >= 0.0, "stopping.mad_threshold", "must be nonnegative");
        }
        r.stopping.holdout_size = st.integer("holdout_size", r.stopping.holdout_size);
    }
    r.variance_fraction = s.num("variance_fraction", r.variance_fraction);
    r.full_refit_interval = s.integer("full_refit_interval", r.full_refit_interval);
    r.fit_starts = static_cast<int>(s.integer("fit_starts", r.fit_starts));
    r.unknown_covariance = s.boolean("unknown_covariance", r.unknown_covariance);
    r.fix_sigma_b_zero = s.boolean("fix_sigma_b_zero", r.fix_sigma_b_zero);
    const std::string mode = s.str("mode", "simulated");
    if (mode == "simulated") {
        r.mode = ExecutionMode::simulated;
    } else if (mode == "real") {
        r.mode = ExecutionMode::real;
    } else {
        Section::fail("mode", "unknown value '" + mode + "'");
    }
    if (s.has("durations")) r.durations = parse_durations(s.sub("durations"));
    r.acquisition_time = s.num("acquisition_time", r.acquisition_time);
    r.max_failures = s.integer("max_failures", r.max_failures);
    cfg.output_dir = s.str("output_dir", cfg.output_dir);
    if (s.has("replicate")) {
        const Section rp = s.sub("replicate");
        if (rp.has("seeds")) {
            const json& a = rp.at("seeds");
            require(a.is_array(), "replicate.seeds", "must be an array of nonnegative integers");
            for (const auto& v : a) {
                require(v.is_number_unsigned(), "replicate.seeds", "must be an array of nonnegative integers");
                cfg.replicate_seeds.push_back(v.get<std::uint64_t>());
            }
        }
        if (rp.has("acquisitions")) {
            const json& a = rp.at("acquisitions");
            require(a.is_array(), "replicate.acquisitions", "must be an array of names");
            for (const auto& v : a) {
                require(v.is_string(), "replicate.acquisitions", "must be an array of names");
                try {
                    cfg.replicate_acquisitions.push_back(parse_acquisition(v.get<std::string>()));
                } catch (const ConfigInvalid& e) {
                    Section::fail("replicate.acquisitions", e.what());
                }
            }
        }
    }
    if (r.unknown_covariance) {
        require(!cfg.external, "unknown_covariance", "needs a built-in problem with design points");
        const Problem pr = make_problem(r.problem, r.problem_options);
        require(pr.design_points.rows() == pr.d, "unknown_covariance",
                "problem '" + r.problem + "' has no output design points");
    }
    validate(r);
    return cfg;
}

namespace {

json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigInvalid("config: cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigInvalid(std::string("config: invalid JSON: ") + e.what());
    }
}

}  // namespace

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    return parse_experiment(read_json(path));
}

json to_json(const ExperimentConfig& cfg) {
    const RunConfig& r = cfg.run;
    json j;
    j["problem"] = r.problem;
    j["problem_options"] = {{"prior_sd", r.problem_options.prior_sd}};
    j["acquisition"] = to_string(r.acquisition);
    j["driver"] = to_string(r.driver);
    j["n0"] = r.n0;
    j["n"] = r.n;
    j["batch"] = r.batch;
    j["workers"] = r.workers;
    j["trigger"] = r.trigger;
    j["per_trigger"] = r.per_trigger;
    j["candidates"] = r.candidates;
    j["reference"] = {{"grid_per_dim", r.reference.grid_per_dim},
                      {"max_grid_dim", r.reference.max_grid_dim},
                      {"lhs_size", r.reference.lhs_size}};
    j["seed"] = r.seed;
    j["pending_rule"] = to_string(r.pending_rule);
    json st = {{"holdout_size", r.stopping.holdout_size}};
    if (r.stopping.mad_threshold) st["mad_threshold"] = *r.stopping.mad_threshold;
    j["stopping"] = st;
    j["variance_fraction"] = r.variance_fraction;
    j["full_refit_interval"] = r.full_refit_interval;
    j["fit_starts"] = r.fit_starts;
    j["unknown_covariance"] = r.unknown_covariance;
    j["fix_sigma_b_zero"] = r.fix_sigma_b_zero;
    j["mode"] = r.mode == ExecutionMode::simulated ? "simulated" : "real";
    if (r.durations) j["durations"] = to_json(*r.durations);
    j["acquisition_time"] = r.acquisition_time;
    j["max_failures"] = r.max_failures;
    if (cfg.external) {
        const auto& e = *cfg.external;
        json sig = json::array();
        for (Index i = 0; i < e.sigma.rows(); ++i) sig.push_back(vec_json(e.sigma.row(i).transpose()));
        j["external"] = {{"command", e.simulator.command},
                         {"timeout_seconds", e.simulator.timeout_seconds},
                         {"lower", vec_json(e.lower)},
                         {"upper", vec_json(e.upper)},
                         {"y", vec_json(e.y)},
                         {"sigma", sig}};
    }
    j["output_dir"] = cfg.output_dir;
    if (!cfg.replicate_seeds.empty() || !cfg.replicate_acquisitions.empty()) {
        json rp;
        rp["seeds"] = cfg.replicate_seeds;
        json acq = json::array();
        for (auto k : cfg.replicate_acquisitions) acq.push_back(to_string(k));
        rp["acquisitions"] = acq;
        j["replicate"] = rp;
    }
    return j;
}

ScheduleFileConfig parse_schedule(const json& doc) {
    const Section s(doc, "", schedule_keys());
    ScheduleFileConfig cfg;
    ScheduleConfig& c = cfg.schedule;
    c.workers = s.integer("workers", c.workers);
    c.trigger = s.integer("trigger", c.trigger);
    c.acquire = s.integer("acquire", c.acquire);
    c.jobs = s.integer("jobs", c.jobs);
    require(c.workers >= 1, "workers", "must be positive");
    require(c.trigger >= 1 && c.trigger <= c.workers, "trigger", "must lie in [1, workers]");
    require(c.acquire >= 1, "acquire", "must be positive");
    require(c.jobs >= 0, "jobs", "must be nonnegative");
    if (s.has("durations")) c.durations = parse_durations(s.sub("durations"));
    if (s.has("acquisition_durations")) {
        const Vector v = s.vec("acquisition_durations");
        require((v.array() >= 0.0).all(), "acquisition_durations", "must be nonnegative");
        c.acquisition_durations.assign(v.data(), v.data() + v.size());
    }
    cfg.output_dir = s.str("output_dir", cfg.output_dir);
    return cfg;
}

ScheduleFileConfig load_schedule(const std::filesystem::path& path) {
    return parse_schedule(read_json(path));
}

json to_json(const ScheduleFileConfig& cfg) {
    const ScheduleConfig& c = cfg.schedule;
    return {{"workers", c.workers},
            {"trigger", c.trigger},
            {"acquire", c.acquire},
            {"jobs", c.jobs},
            {"durations", to_json(c.durations)},
            {"acquisition_durations", c.acquisition_durations},
            {"output_dir", cfg.output_dir}};
}

Problem make_problem(const ExperimentConfig& cfg) {
    if (!cfg.external) return make_problem(cfg.run.problem, cfg.run.problem_options);
    const auto& e = *cfg.external;
    return make_external_problem(cfg.run.problem, e.simulator, Bounds(e.lower, e.upper), e.y, e.sigma);
}

void write_acquisitions_csv(const std::filesystem::path& path, const RunResult& r) {
    auto f = open_out(path);
    const Index p = r.data.param_dim();
    const Index d = r.data.output_dim();
    std::vector<std::string> head = {"stage"};
    for (Index i = 0; i < p; ++i) head.push_back("theta_" + std::to_string(i + 1));
    for (Index i = 0; i < d; ++i) head.push_back("eta_" + std::to_string(i + 1));
    for (const char* h : {"score", "t_start", "t_end"}) head.emplace_back(h);
    f << csv_row(head);
    for (const auto& a : r.acquisitions) {
        std::vector<std::string> row = {std::to_string(a.stage)};
        for (Index i = 0; i < a.theta.size(); ++i) row.push_back(format_number(a.theta(i)));
        for (Index i = 0; i < a.eta.size(); ++i) row.push_back(format_number(a.eta(i)));
        row.push_back(format_number(a.score));
        row.push_back(format_number(a.t_start));
        row.push_back(format_number(a.t_end));
        f << csv_row(row);
    }
}

void write_mad_trace_csv(const std::filesystem::path& path, const RunResult& r) {
    auto f = open_out(path);
    f << "eval_index,mad\n";
    for (std::size_t i = 0; i < r.mad_trace.size(); ++i) {
        f << (i + 1) << ',' << format_number(r.mad_trace[i]) << '\n';
    }
}

void write_jobs_trace_csv(const std::filesystem::path& path, const JobTrace& t) {
    auto f = open_out(path);
    f << "job_id,worker_id,generation_id,submit,start,end,status\n";
    for (const Job& j : t.jobs) {
        f << csv_row({std::to_string(j.id), std::to_string(j.worker_id), std::to_string(j.generation_id),
                      format_number(j.submit_time), format_number(j.start_time),
                      format_number(j.end_time), to_string(j.status)});
    }
}

void write_run_outputs(const std::filesystem::path& dir, const RunResult& r,
                       const ExperimentConfig& cfg) {
    std::filesystem::create_directories(dir);
    write_acquisitions_csv(dir / "acquisitions.csv", r);
    write_mad_trace_csv(dir / "mad_trace.csv", r);
    write_jobs_trace_csv(dir / "jobs_trace.csv", r.job_trace);
    json s;
    s["final_mad"] = r.mad_trace.empty() ? json(nullptr) : json(r.mad_trace.back());
    s["initial_mad"] = r.initial_mad ? json(*r.initial_mad) : json(nullptr);
    s["wall_time"] = r.wall_time;
    s["seed"] = cfg.run.seed;
    s["completed"] = static_cast<Index>(r.acquisitions.size());
    s["aborted"] = r.aborted;
    s["stopped_early"] = r.stopped_early;
    s["reason"] = r.reason;
    s["simulated_makespan"] = r.job_trace.makespan();
    s["config"] = to_json(cfg);
    auto f = open_out(dir / "summary.json");
    f << s.dump(2) << '\n';
}

std::vector<MadQuantileRow> mad_quantiles(const std::string& acquisition,
                                          const std::vector<std::vector<double>>& traces) {
    std::size_t len = 0;
    for (const auto& t : traces) len = std::max(len, t.size());
    auto quantile = [](std::vector<double> v, double q) {
        std::sort(v.begin(), v.end());
        const double h = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    std::vector<MadQuantileRow> out;
    for (std::size_t i = 0; i < len; ++i) {
        std::vector<double> col;
        for (const auto& t : traces) {
            if (i < t.size()) col.push_back(t[i]);
        }
        out.push_back({acquisition, static_cast<Index>(i + 1), quantile(col, 0.05), quantile(col, 0.5),
                       quantile(col, 0.95)});
    }
    return out;
}

void write_mad_quantiles_csv(const std::filesystem::path& path,
                             const std::vector<MadQuantileRow>& rows) {
    auto f = open_out(path);
    f << "acquisition,eval_index,q05,median,q95\n";
    for (const auto& r : rows) {
        f << csv_row({r.acquisition, std::to_string(r.eval_index), format_number(r.q05),
                      format_number(r.median), format_number(r.q95)});
    }
}

}  // namespace eivar
