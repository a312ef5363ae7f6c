// geoforge: poll scientific-code repositories, queue test jobs, execute the
// build/test matrix, compare outputs against golden references and render a
// dashboard. One binary, subcommand per verb; `daemon` wires them into a
// loop.
//
// Exit codes: 0 success / all green, 1 build or test failures, 2 usage,
// config or comparator errors, 3 daemon lock contention.

#include "CLI11.hpp"

#include "geoforge/command.hpp"
#include "geoforge/compare.hpp"
#include "geoforge/errors.hpp"
#include "geoforge/executor.hpp"
#include "geoforge/manifest.hpp"
#include "geoforge/poller.hpp"
#include "geoforge/queue.hpp"
#include "geoforge/report.hpp"
#include "geoforge/results.hpp"
#include "geoforge/util.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace geoforge;

namespace {

volatile std::sig_atomic_t g_stop = 0;

void handle_stop_signal(int)
{
    g_stop = 1;
}

struct Config {
    fs::path manifest_path = "geoforge.manifest";
    fs::path data_dir = "geoforge-data";
    int poll_interval_s = 300;
    int parallelism = 4;
    fs::path report_dir; // empty -> <data_dir>/reports
};

// Line-oriented `key = value` file; '#' starts a comment line.
void apply_config_file(Config& config, const fs::path& path)
{
    std::string text = read_text_file(path);
    int line_no = 0;
    for (const auto& raw : split_lines(text)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path.string() + ":" + std::to_string(line_no)
                             + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto parse_positive = [&](const std::string& what) {
            int v = 0;
            try {
                std::size_t used = 0;
                v = std::stoi(value, &used);
                if (used != value.size())
                    throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what
                                 + " must be an integer, got '" + value + "'");
            }
            if (v < 1)
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what
                                 + " must be >= 1");
            return v;
        };
        if (key == "manifest")
            config.manifest_path = value;
        else if (key == "data_dir")
            config.data_dir = value;
        else if (key == "poll_interval_s")
            config.poll_interval_s = parse_positive("poll_interval_s");
        else if (key == "parallelism")
            config.parallelism = parse_positive("parallelism");
        else if (key == "report_dir")
            config.report_dir = value;
        else
            throw ParseError(path.string() + ":" + std::to_string(line_no)
                             + ": unknown config key '" + key + "'");
    }
}

struct Paths {
    fs::path data;
    fs::path queue_log;
    fs::path poll_state;
    fs::path results;
    fs::path reports;
    fs::path libcache;
    fs::path lock;
    fs::path probe_scratch;

    static Paths resolve(const Config& config)
    {
        Paths p;
        p.data = config.data_dir;
        p.queue_log = p.data / "queue.log";
        p.poll_state = p.data / "poll-state.json";
        p.results = p.data / "results";
        p.reports = config.report_dir.empty() ? p.data / "reports" : config.report_dir;
        p.libcache = p.data / "libcache";
        p.lock = p.data / "daemon.lock";
        p.probe_scratch = p.data / "probe-scratch";
        return p;
    }
};

void ensure_data_dir(const Paths& paths)
{
    fs::create_directories(paths.data);
    fs::create_directories(paths.results);
    fs::create_directories(paths.probe_scratch);
}

void write_reports(const Manifest& manifest, const Paths& paths,
                   const std::vector<InFlightCell>& running)
{
    auto results = load_cell_results(paths.results);
    if (!running.empty()) {
        std::set<std::pair<std::string, std::string>> in_flight;
        for (const auto& cell : running)
            in_flight.insert({cell.code_id, cell.platform_id});
        std::erase_if(results, [&](const CellResult& r) {
            return in_flight.count({r.code_id, r.platform_id}) > 0;
        });
    }
    MatrixResult matrix = build_matrix(manifest, results, running);
    fs::create_directories(paths.reports);
    write_text_file_atomic(paths.reports / "dashboard.html", render_html(matrix));
    write_text_file_atomic(paths.reports / "summary.txt", render_summary(matrix));
}

std::vector<std::int64_t> poll_cycle(const Manifest& manifest, const Paths& paths,
                                     JobQueue& queue, CommandRunner& runner)
{
    PollState state = PollState::load(paths.poll_state);
    PollOptions options;
    options.scratch_dir = paths.probe_scratch;
    auto events = poll_once(manifest, state, runner, options);
    auto ids = enqueue_changes(events, queue);
    // Jobs are durable before the state file moves forward, so a crash here
    // re-detects the change instead of losing it.
    state.save(paths.poll_state);
    return ids;
}

// Executes one queued payload across all of its platforms and stores the
// cell results.
std::vector<CellResult> execute_payload(const Manifest& manifest, const Config& config,
                                        const Paths& paths, LibraryCache& cache,
                                        CommandRunner& runner, const JobPayload& payload)
{
    TestPlan plan = generate_test_plan(manifest, payload.code_id, payload.revision);
    ExecutorOptions options;
    options.data_dir = paths.data;
    options.parallelism = config.parallelism;
    Executor executor(options, cache, runner);
    auto cells = executor.run_plan(plan);
    for (const auto& cell : cells)
        save_cell_result(paths.results, cell);
    return cells;
}

std::vector<InFlightCell> plan_cells(const Manifest& manifest, const JobPayload& payload)
{
    std::vector<InFlightCell> cells;
    const CodeSpec* code = manifest.find_code(payload.code_id);
    if (!code)
        return cells;
    for (const auto& platform_id : code->platform_ids)
        cells.push_back({payload.code_id, platform_id});
    return cells;
}

std::string probe_revision(const Manifest& manifest, const CodeSpec& code, const Paths& paths,
                           CommandRunner& runner)
{
    (void)manifest;
    fs::path scratch = paths.probe_scratch / sanitize_path_component(code.id);
    fs::create_directories(scratch);
    std::map<std::string, std::string> vars{{"workdir", scratch.string()}};
    std::string command = substitute_template(code.revision_probe, vars);
    StepResult result = runner.run(command, scratch, {}, std::chrono::milliseconds(60'000));
    if (!result.ok())
        throw ValidationError("revision probe for '" + code.id + "' failed: "
                              + (result.timed_out ? "timed out"
                                                  : "exit " + std::to_string(result.exit_code)));
    for (const auto& line : split_lines(result.stdout_text)) {
        std::string r = trim(line);
        if (!r.empty())
            return r;
    }
    throw ValidationError("revision probe for '" + code.id + "' produced no output");
}

int cmd_poll(const Config& config)
{
    Manifest manifest = load_manifest(config.manifest_path);
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);
    JobQueue queue(paths.queue_log);
    CommandRunner runner;
    auto ids = poll_cycle(manifest, paths, queue, runner);
    for (auto id : ids) {
        auto record = queue.find(id);
        if (record)
            std::cout << "enqueued job " << id << ": " << record->job.payload.code_id << " @ "
                      << record->job.payload.revision << "\n";
    }
    std::cout << ids.size() << (ids.size() == 1 ? " job enqueued" : " jobs enqueued") << "\n";
    return 0;
}

int cmd_run(const Config& config, const std::string& code_id,
            const std::optional<std::string>& revision_flag)
{
    Manifest manifest = load_manifest(config.manifest_path);
    const CodeSpec* code = manifest.find_code(code_id);
    if (!code)
        throw ValidationError("unknown code '" + code_id + "'");
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);
    CommandRunner runner;
    std::string revision =
        revision_flag ? *revision_flag : probe_revision(manifest, *code, paths, runner);
    LibraryCache cache(paths.libcache);
    auto cells =
        execute_payload(manifest, config, paths, cache, runner, {code_id, revision});
    write_reports(manifest, paths, {});
    bool all_green = std::all_of(cells.begin(), cells.end(),
                                 [](const CellResult& c) { return c.green(); });
    for (const auto& cell : cells)
        std::cout << cell.code_id << " / " << cell.platform_id << ": build "
                  << build_status_name(cell.build.status) << ", test "
                  << test_status_name(cell.test.status) << "\n";
    std::cout << "reports written to " << paths.reports.string() << "\n";
    return all_green ? 0 : 1;
}

class DaemonLock {
public:
    explicit DaemonLock(const fs::path& path)
    {
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0)
            throw ExecError("cannot open lock file " + path.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            return;
        }
        std::string pid = std::to_string(::getpid()) + "\n";
        if (::ftruncate(fd_, 0) != 0
            || ::write(fd_, pid.data(), pid.size()) != static_cast<ssize_t>(pid.size()))
            log_warn("could not record the daemon pid in " + path.string());
        held_ = true;
    }

    ~DaemonLock()
    {
        if (fd_ >= 0)
            ::close(fd_);
    }

    DaemonLock(const DaemonLock&) = delete;
    DaemonLock& operator=(const DaemonLock&) = delete;

    bool held() const { return held_; }

private:
    int fd_ = -1;
    bool held_ = false;
};

// Claims and executes queued jobs until the queue is empty or a stop signal
// arrives. The in-flight job always finishes; renders reports around it.
std::size_t drain_queue(const Manifest& manifest, const Config& config, const Paths& paths,
                        JobQueue& queue, LibraryCache& cache, CommandRunner& runner)
{
    std::size_t executed = 0;
    while (!g_stop) {
        auto record = queue.claim();
        if (!record)
            break;
        ++executed;
        const JobPayload& payload = record->job.payload;
        log_info("job " + std::to_string(record->job.id) + ": " + payload.code_id + " @ "
                 + payload.revision);
        if (!manifest.find_code(payload.code_id)) {
            log_warn("job " + std::to_string(record->job.id) + " names unknown code '"
                     + payload.code_id + "', marking failed");
            queue.acknowledge(record->job.id, JobOutcome::Failed);
            continue;
        }
        try {
            write_reports(manifest, paths, plan_cells(manifest, payload));
            execute_payload(manifest, config, paths, cache, runner, payload);
            queue.acknowledge(record->job.id, JobOutcome::Done);
        } catch (const std::exception& e) {
            log_error("job " + std::to_string(record->job.id) + " hit an infrastructure error: "
                      + e.what());
            if (record->attempts < 3)
                queue.requeue(record->job.id);
            else
                queue.acknowledge(record->job.id, JobOutcome::Failed);
        }
        write_reports(manifest, paths, {});
    }
    return executed;
}

int cmd_daemon(const Config& config, bool exit_when_idle)
{
    Manifest manifest = load_manifest(config.manifest_path);
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);

    DaemonLock lock(paths.lock);
    if (!lock.held()) {
        std::cerr << "geoforge: another daemon already holds " << paths.lock.string() << "\n";
        return 3;
    }

    struct sigaction sa{};
    sa.sa_handler = handle_stop_signal;
    ::sigaction(SIGTERM, &sa, nullptr);
    ::sigaction(SIGINT, &sa, nullptr);

    JobQueue queue(paths.queue_log);
    std::size_t recovered = queue.recover();
    if (recovered > 0)
        log_info("recovered " + std::to_string(recovered) + " orphaned job(s)");
    LibraryCache cache(paths.libcache);
    CommandRunner runner;

    write_reports(manifest, paths, {});

    using clock = std::chrono::steady_clock;
    auto interval = std::chrono::seconds(config.poll_interval_s);
    auto next_poll = clock::now(); // orphans drain first, then the first poll
    log_info("daemon started; polling every " + std::to_string(config.poll_interval_s) + " s");

    while (!g_stop) {
        drain_queue(manifest, config, paths, queue, cache, runner);
        if (g_stop)
            break;
        bool polled = false;
        std::size_t enqueued = 0;
        if (clock::now() >= next_poll) {
            try {
                enqueued = poll_cycle(manifest, paths, queue, runner).size();
            } catch (const std::exception& e) {
                log_error(std::string("poll cycle failed: ") + e.what());
            }
            polled = true;
            next_poll = clock::now() + interval;
        }
        if (polled && enqueued > 0)
            continue; // run the new jobs before sleeping
        if (exit_when_idle && polled && queue.pending_count() == 0)
            break;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }

    write_reports(manifest, paths, {});
    log_info("daemon stopped");
    return 0;
}

int cmd_compare(const std::string& golden_path, const std::string& candidate_path,
                const std::string& metric, const std::optional<double>& threshold_flag,
                const std::string& profile_path)
{
    auto comparator = comparator_from_name(metric);
    if (!comparator)
        throw ValidationError("unknown metric '" + metric
                              + "' (exact, absolute, relative, l2, correlation)");
    double threshold = 0.0;
    if (threshold_flag) {
        threshold = *threshold_flag;
    } else {
        auto fallback = comparator_default_threshold(*comparator);
        if (!fallback)
            throw ValidationError("metric '" + metric + "' requires an explicit --threshold");
        threshold = *fallback;
    }

    Signal golden = parse_timeseries(golden_path);
    Signal candidate = parse_timeseries(candidate_path);
    ComparisonResult result = compare_signals(golden, candidate, *comparator, threshold);

    std::ostringstream out;
    out << std::setprecision(12);
    out << "metric: " << result.metric << "\n"
        << "statistic: " << result.statistic << "\n"
        << "threshold: " << result.threshold << "\n";
    if (!result.note.empty())
        out << "note: " << result.note << "\n";
    out << "result: " << (result.passed ? "pass" : "fail") << "\n";
    std::cout << out.str();

    if (!profile_path.empty()) {
        DifferenceProfile profile =
            result.profile ? *result.profile : difference_profile(golden, candidate);
        std::ostringstream tsv;
        tsv << std::setprecision(17);
        tsv << "# time\tabs_diff\trel_diff\n";
        for (std::size_t i = 0; i < profile.abs_diff.size(); ++i)
            tsv << golden.times[i] << "\t" << profile.abs_diff[i] << "\t" << profile.rel_diff[i]
                << "\n";
        write_text_file_atomic(profile_path, tsv.str());
    }
    return result.passed ? 0 : 1;
}

int cmd_report(const Config& config, const std::string& out_dir)
{
    Manifest manifest = load_manifest(config.manifest_path);
    Config effective = config;
    if (!out_dir.empty())
        effective.report_dir = out_dir;
    Paths paths = Paths::resolve(effective);
    ensure_data_dir(paths);
    write_reports(manifest, paths, {});
    std::cout << "wrote " << (paths.reports / "dashboard.html").string() << "\n"
              << "wrote " << (paths.reports / "summary.txt").string() << "\n";
    return 0;
}

int cmd_queue_ls(const Config& config)
{
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);
    JobQueue queue(paths.queue_log);
    auto records = queue.list();
    if (records.empty()) {
        std::cout << "queue empty\n";
        return 0;
    }
    for (const auto& record : records) {
        std::cout << "job " << record.job.id << ": " << job_status_name(record.status)
                  << " attempts=" << record.attempts << " code=" << record.job.payload.code_id
                  << " revision=" << record.job.payload.revision;
        if (record.claimed_at_ms)
            std::cout << " claimed_at=" << format_iso8601(*record.claimed_at_ms);
        std::cout << "\n";
    }
    return 0;
}

int cmd_queue_compact(const Config& config)
{
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);
    JobQueue queue(paths.queue_log);
    queue.compact();
    std::cout << "queue log compacted; " << queue.list().size() << " live record(s) kept\n";
    return 0;
}

int cmd_cache_ls(const Config& config)
{
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);
    LibraryCache cache(paths.libcache);
    auto entries = cache.entries();
    if (entries.empty()) {
        std::cout << "cache empty\n";
        return 0;
    }
    for (const auto& entry : entries)
        std::cout << entry.library_id << " " << entry.version << " @ " << entry.platform_id
                  << " -> " << entry.install_dir.string() << "\n";
    return 0;
}

int cmd_cache_invalidate(const Config& config, const std::string& library,
                         const std::string& platform)
{
    Paths paths = Paths::resolve(config);
    ensure_data_dir(paths);
    LibraryCache cache(paths.libcache);
    std::size_t removed = cache.invalidate(library, platform);
    std::cout << "invalidated " << removed << " cache entr" << (removed == 1 ? "y" : "ies")
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"build-and-test orchestration for scientific simulation codes"};
    app.name("geoforge");
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    std::optional<std::string> manifest_flag;
    std::optional<std::string> data_dir_flag;
    std::optional<int> poll_interval_flag;
    std::optional<int> parallelism_flag;
    std::optional<std::string> report_dir_flag;

    app.add_option("--config", config_file, "config file (key = value lines)");
    app.add_option("--manifest", manifest_flag, "manifest file path");
    app.add_option("--data-dir", data_dir_flag, "state directory (queue, cache, results)");
    app.add_option("--poll-interval", poll_interval_flag, "daemon poll interval, seconds")
        ->check(CLI::PositiveNumber);
    app.add_option("--parallelism", parallelism_flag, "concurrent matrix cells")
        ->check(CLI::PositiveNumber);
    app.add_option("--report-dir", report_dir_flag, "dashboard output directory");

    auto* poll = app.add_subcommand("poll", "probe repositories once, enqueue changed codes");

    std::string run_code;
    std::optional<std::string> run_revision;
    auto* run = app.add_subcommand("run", "execute one code's matrix now, bypassing the queue");
    run->add_option("code", run_code, "code id from the manifest")->required();
    run->add_option("--revision", run_revision, "revision label (default: probe the repository)");

    bool exit_when_idle = false;
    auto* daemon = app.add_subcommand("daemon", "poll, execute and report in a loop");
    daemon->add_flag("--exit-when-idle", exit_when_idle,
                     "exit once the queue is empty and a poll finds no changes");

    std::string cmp_golden, cmp_candidate, cmp_metric, cmp_profile;
    std::optional<double> cmp_threshold;
    auto* compare = app.add_subcommand("compare", "compare a candidate time series to a golden one");
    compare->add_option("golden", cmp_golden, "golden reference file")->required();
    compare->add_option("candidate", cmp_candidate, "candidate output file")->required();
    compare->add_option("--metric", cmp_metric, "exact, absolute, relative, l2 or correlation")
        ->required();
    compare->add_option("--threshold,--tol", cmp_threshold, "pass/fail threshold");
    compare->add_option("--profile", cmp_profile, "write per-sample differences to this TSV file");

    std::string report_out;
    auto* report = app.add_subcommand("report", "render the dashboard from stored results");
    report->add_option("--out", report_out, "output directory (default <data-dir>/reports)");

    auto* queue_cmd = app.add_subcommand("queue", "inspect or compact the job queue");
    queue_cmd->require_subcommand(1);
    auto* queue_ls = queue_cmd->add_subcommand("ls", "list jobs");
    auto* queue_compact = queue_cmd->add_subcommand("compact", "drop terminal records from the log");

    auto* cache_cmd = app.add_subcommand("cache", "inspect or invalidate the library cache");
    cache_cmd->require_subcommand(1);
    auto* cache_ls = cache_cmd->add_subcommand("ls", "list cached library builds");
    std::string inv_library, inv_platform;
    auto* cache_invalidate =
        cache_cmd->add_subcommand("invalidate", "remove cached builds so they rebuild");
    cache_invalidate->add_option("--library", inv_library, "only this library id");
    cache_invalidate->add_option("--platform", inv_platform, "only this platform id");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        Config config;
        if (!config_file.empty())
            apply_config_file(config, config_file);
        if (const char* env_data = std::getenv("GEOFORGE_DATA_DIR"); env_data && *env_data)
            config.data_dir = env_data;
        if (manifest_flag)
            config.manifest_path = *manifest_flag;
        if (data_dir_flag)
            config.data_dir = *data_dir_flag;
        if (poll_interval_flag)
            config.poll_interval_s = *poll_interval_flag;
        if (parallelism_flag)
            config.parallelism = *parallelism_flag;
        if (report_dir_flag)
            config.report_dir = *report_dir_flag;

        if (poll->parsed())
            return cmd_poll(config);
        if (run->parsed())
            return cmd_run(config, run_code, run_revision);
        if (daemon->parsed())
            return cmd_daemon(config, exit_when_idle);
        if (compare->parsed())
            return cmd_compare(cmp_golden, cmp_candidate, cmp_metric, cmp_threshold, cmp_profile);
        if (report->parsed())
            return cmd_report(config, report_out);
        if (queue_ls->parsed())
            return cmd_queue_ls(config);
        if (queue_compact->parsed())
            return cmd_queue_compact(config);
        if (cache_ls->parsed())
            return cmd_cache_ls(config);
        if (cache_invalidate->parsed())
            return cmd_cache_invalidate(config, inv_library, inv_platform);
        std::cerr << "geoforge: no subcommand\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "geoforge: error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "geoforge: error: " << e.what() << "\n";
        return 2;
    }
}
