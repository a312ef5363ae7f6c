#include "geoforge/executor.hpp"

#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

using nlohmann::json;

namespace geoforge {

const char* build_status_name(BuildStatus s)
{
    switch (s) {
    case BuildStatus::Succeeded: return "Succeeded";
    case BuildStatus::Failed: return "Failed";
    case BuildStatus::TimedOut: return "TimedOut";
    }
    return "?";
}

const char* test_status_name(TestStatus s)
{
    switch (s) {
    case TestStatus::Passed: return "Passed";
    case TestStatus::Failed: return "Failed";
    case TestStatus::TimedOut: return "TimedOut";
    case TestStatus::Skipped: return "Skipped";
    }
    return "?";
}

namespace {

const char* kStampName = ".geoforge-built.json";

std::string cache_key(const LibrarySpec& lib, const PlatformSpec& platform)
{
    return platform.id + "\x1f" + lib.id + "\x1f" + lib.version;
}

std::string entry_name(const LibrarySpec& lib)
{
    return sanitize_path_component(lib.id) + "-" + sanitize_path_component(lib.version);
}

void wipe_and_create(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    std::filesystem::create_directories(dir);
}

using millis = std::chrono::milliseconds;
using clock_ = std::chrono::steady_clock;

millis remaining(clock_::time_point deadline)
{
    return std::chrono::duration_cast<millis>(deadline - clock_::now());
}

// Collects one phase's log and enforces its wall-clock budget.
struct PhaseLog {
    std::ostringstream log;
    int step_no = 0;
    int total_steps = 0;

    void step_header(const std::string& role, const std::string& command)
    {
        ++step_no;
        log << "== step " << step_no << "/" << total_steps;
        if (!role.empty())
            log << " (" << role << ")";
        log << " == " << format_iso8601(now_ms()) << "\n";
        log << "$ " << command << "\n";
    }

    void step_footer(const StepResult& r)
    {
        log << r.output;
        if (!r.output.empty() && r.output.back() != '\n')
            log << "\n";
        if (r.timed_out)
            log << "-> killed: timeout after " << r.duration_s << "s\n";
        else
            log << "-> exit " << r.exit_code << " (" << r.duration_s << "s)\n";
    }
};

} // namespace

LibraryCache::LibraryCache(std::filesystem::path root)
    : root_(std::move(root))
{
    std::filesystem::create_directories(root_);
}

std::filesystem::path LibraryCache::entry_dir(const LibrarySpec& lib,
                                              const PlatformSpec& platform) const
{
    return root_ / sanitize_path_component(platform.id) / entry_name(lib);
}

std::optional<CachedLibrary> LibraryCache::lookup(const LibrarySpec& lib,
                                                  const PlatformSpec& platform) const
{
    std::filesystem::path dir = entry_dir(lib, platform);
    std::error_code ec;
    if (!std::filesystem::exists(dir / kStampName, ec))
        return std::nullopt;
    if (!std::filesystem::exists(dir / lib.install_marker, ec))
        return std::nullopt;

    CachedLibrary entry;
    entry.library_id = lib.id;
    entry.version = lib.version;
    entry.platform_id = platform.id;
    entry.install_dir = dir;
    json j = json::parse(read_text_file(dir / kStampName), nullptr, false);
    if (!j.is_discarded())
        entry.built_at_ms = j.value("built_at_ms", std::int64_t{0});
    return entry;
}

std::vector<CachedLibrary> LibraryCache::entries() const
{
    std::vector<CachedLibrary> out;
    std::error_code ec;
    for (const auto& platform_dir : std::filesystem::directory_iterator(root_, ec)) {
        if (!platform_dir.is_directory())
            continue;
        for (const auto& entry : std::filesystem::directory_iterator(platform_dir.path(), ec)) {
            std::filesystem::path stamp = entry.path() / kStampName;
            if (!std::filesystem::exists(stamp, ec))
                continue;
            json j = json::parse(read_text_file(stamp), nullptr, false);
            if (j.is_discarded())
                continue;
            CachedLibrary lib;
            lib.library_id = j.value("library", "");
            lib.version = j.value("version", "");
            lib.platform_id = j.value("platform", "");
            lib.built_at_ms = j.value("built_at_ms", std::int64_t{0});
            lib.install_dir = entry.path();
            out.push_back(std::move(lib));
        }
    }
    std::sort(out.begin(), out.end(), [](const CachedLibrary& a, const CachedLibrary& b) {
        return std::tie(a.platform_id, a.library_id, a.version)
            < std::tie(b.platform_id, b.library_id, b.version);
    });
    return out;
}

std::size_t LibraryCache::invalidate(const std::string& library_id,
                                     const std::string& platform_id)
{
    std::size_t removed = 0;
    for (const auto& entry : entries()) {
        if (!library_id.empty() && entry.library_id != library_id)
            continue;
        if (!platform_id.empty() && entry.platform_id != platform_id)
            continue;
        std::error_code ec;
        std::filesystem::remove_all(entry.install_dir, ec);
        if (!ec)
            ++removed;
    }
    return removed;
}

std::unique_lock<std::mutex> LibraryCache::lock_key(const std::string& key)
{
    std::mutex* m = nullptr;
    {
        std::lock_guard<std::mutex> lock(registry_mutex_);
        auto& slot = key_mutexes_[key];
        if (!slot)
            slot = std::make_unique<std::mutex>();
        m = slot.get();
    }
    return std::unique_lock<std::mutex>(*m);
}

Executor::Executor(ExecutorOptions options, LibraryCache& cache, CommandRunner& runner)
    : options_(std::move(options))
    , cache_(cache)
    , runner_(runner)
{
}

CachedLibrary Executor::prepare_library(const LibrarySpec& lib, const PlatformSpec& platform,
                                        millis budget)
{
    auto key_lock = cache_.lock_key(cache_key(lib, platform));

    if (auto hit = cache_.lookup(lib, platform))
        return *hit;

    std::filesystem::path final_dir = cache_.entry_dir(lib, platform);
    std::filesystem::path staging = final_dir;
    staging += ".staging";
    std::filesystem::path scratch =
        cache_.root() / ".build" / sanitize_path_component(platform.id) / entry_name(lib);
    wipe_and_create(staging);
    wipe_and_create(scratch);

    PhaseLog phase;
    phase.total_steps = static_cast<int>(lib.build_steps.size());
    auto deadline = clock_::now() + budget;

    std::map<std::string, std::string> vars = {
        {"workdir", scratch.string()},
        {"libdir", staging.string()},
    };

    auto fail = [&](const std::string& what, bool timed_out) -> LibraryBuildFailure {
        std::error_code ec;
        std::filesystem::remove_all(staging, ec);
        return LibraryBuildFailure("library " + lib.id + "-" + lib.version + " on "
                                       + platform.id + ": " + what,
                                   phase.log.str(), timed_out);
    };

    for (const auto& step : lib.build_steps) {
        std::string command = substitute_template(step, vars);
        millis left = remaining(deadline);
        if (left.count() <= 0) {
            phase.step_header("library " + lib.id, command);
            phase.log << "-> not started: phase budget exhausted\n";
            throw fail("build timed out", true);
        }
        phase.step_header("library " + lib.id, command);
        StepResult r = runner_.run(command, scratch, platform.env, left);
        phase.step_footer(r);
        if (r.timed_out)
            throw fail("build timed out", true);
        if (r.exit_code != 0)
            throw fail("build step exited " + std::to_string(r.exit_code), false);
    }

    std::error_code ec;
    if (!std::filesystem::exists(staging / lib.install_marker, ec)) {
        phase.log << "install marker missing: " << lib.install_marker << "\n";
        throw fail("install marker \"" + lib.install_marker + "\" missing after build", false);
    }

    CachedLibrary entry;
    entry.library_id = lib.id;
    entry.version = lib.version;
    entry.platform_id = platform.id;
    entry.built_at_ms = now_ms();
    entry.install_dir = final_dir;

    json stamp;
    stamp["library"] = lib.id;
    stamp["version"] = lib.version;
    stamp["platform"] = platform.id;
    stamp["built_at_ms"] = entry.built_at_ms;
    write_text_file_atomic(staging / kStampName, stamp.dump(2) + "\n");
    write_text_file_atomic(staging / "build.log", phase.log.str());

    std::filesystem::remove_all(final_dir, ec);
    std::filesystem::rename(staging, final_dir, ec);
    if (ec)
        throw fail("cannot move staged install into cache: " + ec.message(), false);
    std::filesystem::remove_all(scratch, ec);
    return entry;
}

std::filesystem::path Executor::libs_aggregate_dir(const std::filesystem::path& workdir) const
{
    return workdir / "libs";
}

std::filesystem::path Executor::unit_workdir(const TestPlan& plan, const PlanUnit& unit) const
{
    std::filesystem::path root(unit.platform.workdir_root);
    if (root.empty())
        root = options_.data_dir / "work";
    else if (root.is_relative())
        root = options_.data_dir / root;
    return root / sanitize_path_component(plan.code_id)
        / sanitize_path_component(plan.revision)
        / sanitize_path_component(unit.platform.id);
}

BuildResult Executor::run_build_phase(const TestPlan& plan, const PlanUnit& unit,
                                      const std::filesystem::path& workdir)
{
    BuildResult result;
    auto start = clock_::now();
    auto deadline = start + std::chrono::seconds(plan.timeout_build_s);

    PhaseLog phase;
    phase.total_steps = static_cast<int>(unit.libraries.size() + unit.build_steps.size());

    std::filesystem::path libdir = libs_aggregate_dir(workdir);
    std::filesystem::create_directories(libdir);

    auto finish = [&](BuildStatus status, std::optional<int> failed_step) {
        result.status = status;
        result.step_index_failed = failed_step;
        result.log = phase.log.str();
        result.duration_s = std::chrono::duration<double>(clock_::now() - start).count();
        return result;
    };

    for (const auto& lib : unit.libraries) {
        phase.step_header("library " + lib.id + "-" + lib.version, "(prepare via cache)");
        try {
            CachedLibrary entry = prepare_library(lib, unit.platform, remaining(deadline));
            std::error_code ec;
            std::filesystem::path link = libdir / sanitize_path_component(lib.id);
            std::filesystem::remove(link, ec);
            std::filesystem::create_directory_symlink(entry.install_dir, link, ec);
            if (ec)
                return finish(BuildStatus::Failed, phase.step_no);
            phase.log << "-> ready: " << entry.install_dir.string() << "\n";
        } catch (const LibraryBuildFailure& e) {
            phase.log << e.log();
            phase.log << "-> library preparation failed: " << e.what() << "\n";
            return finish(e.timed_out() ? BuildStatus::TimedOut : BuildStatus::Failed,
                          phase.step_no);
        }
    }

    std::map<std::string, std::string> vars = {
        {"workdir", workdir.string()},
        {"libdir", libdir.string()},
        {"revision", plan.revision},
    };

    for (const auto& step : unit.build_steps) {
        std::string command = substitute_template(step, vars);
        millis left = remaining(deadline);
        if (left.count() <= 0) {
            phase.step_header("", command);
            phase.log << "-> not started: phase budget exhausted\n";
            return finish(BuildStatus::TimedOut, phase.step_no);
        }
        phase.step_header("", command);
        StepResult r = runner_.run(command, workdir, unit.platform.env, left);
        phase.step_footer(r);
        if (r.timed_out)
            return finish(BuildStatus::TimedOut, phase.step_no);
        if (r.exit_code != 0)
            return finish(BuildStatus::Failed, phase.step_no);
    }
    return finish(BuildStatus::Succeeded, std::nullopt);
}

TestPhaseResult Executor::run_test_phase(const TestPlan& plan, const PlanUnit& unit,
                                         const BuildResult& build,
                                         const std::filesystem::path& workdir)
{
    TestPhaseResult result;
    if (build.status != BuildStatus::Succeeded) {
        result.status = TestStatus::Skipped;
        result.log = "build phase did not succeed; test phase skipped\n";
        return result;
    }

    auto start = clock_::now();
    auto deadline = start + std::chrono::seconds(plan.timeout_test_s);
    PhaseLog phase;
    for (const auto& t : unit.tests)
        phase.total_steps += static_cast<int>(t.run_steps.size());

    std::filesystem::path libdir = libs_aggregate_dir(workdir);
    bool timed_out = false;

    for (const auto& test : unit.tests) {
        TestCaseOutcome outcome;
        outcome.test_id = test.id;

        if (timed_out) {
            outcome.error = "not run: test phase timed out";
            result.per_test.push_back(std::move(outcome));
            continue;
        }

        std::map<std::string, std::string> vars = {
            {"workdir", workdir.string()},
            {"libdir", libdir.string()},
            {"revision", plan.revision},
            {"output", test.output_path},
        };

        std::error_code mk_ec;
        std::filesystem::create_directories((workdir / test.output_path).parent_path(), mk_ec);

        phase.log << "-- test " << test.id << " --\n";
        for (const auto& step : test.run_steps) {
            std::string command = substitute_template(step, vars);
            millis left = remaining(deadline);
            if (left.count() <= 0) {
                phase.step_header("test " + test.id, command);
                phase.log << "-> not started: phase budget exhausted\n";
                outcome.error = "timed out";
                timed_out = true;
                break;
            }
            phase.step_header("test " + test.id, command);
            StepResult r = runner_.run(command, workdir, unit.platform.env, left);
            phase.step_footer(r);
            if (r.timed_out) {
                outcome.error = "timed out";
                timed_out = true;
                break;
            }
            if (r.exit_code != 0) {
                outcome.error = "run step exited " + std::to_string(r.exit_code);
                break;
            }
        }

        if (outcome.error.empty()) {
            std::filesystem::path produced = workdir / test.output_path;
            std::error_code ec;
            if (!std::filesystem::exists(produced, ec)) {
                outcome.error = "output missing: " + test.output_path;
            } else {
                try {
                    Signal golden = parse_timeseries(test.golden_path);
                    Signal candidate = parse_timeseries(produced);
                    outcome.comparison =
                        compare_signals(golden, candidate, test.comparator, test.threshold);
                    phase.log << "comparison " << outcome.comparison->metric
                              << ": statistic=" << outcome.comparison->statistic
                              << " threshold=" << outcome.comparison->threshold << " -> "
                              << (outcome.comparison->passed ? "pass" : "fail") << "\n";
                } catch (const Error& e) {
                    outcome.error = e.what();
                    phase.log << "comparison error: " << e.what() << "\n";
                }
            }
        }
        result.per_test.push_back(std::move(outcome));
    }

    bool all_passed = true;
    for (const auto& t : result.per_test)
        all_passed = all_passed && t.passed();
    if (timed_out)
        result.status = TestStatus::TimedOut;
    else
        result.status = all_passed ? TestStatus::Passed : TestStatus::Failed;
    result.log = phase.log.str();
    result.duration_s = std::chrono::duration<double>(clock_::now() - start).count();
    return result;
}

CellResult Executor::run_unit(const TestPlan& plan, const PlanUnit& unit)
{
    CellResult cell;
    cell.code_id = plan.code_id;
    cell.platform_id = unit.platform.id;
    cell.revision = plan.revision;
    cell.started_at_ms = now_ms();

    std::filesystem::path workdir = unit_workdir(plan, unit);
    wipe_and_create(workdir);
    cell.workdir = workdir;

    cell.build = run_build_phase(plan, unit, workdir);
    cell.build_log_path = workdir / "build.log";
    write_text_file_atomic(cell.build_log_path, cell.build.log);

    cell.test = run_test_phase(plan, unit, cell.build, workdir);
    cell.test_log_path = workdir / "test.log";
    write_text_file_atomic(cell.test_log_path, cell.test.log);

    cell.finished_at_ms = now_ms();
    return cell;
}

std::vector<CellResult> Executor::run_plan(const TestPlan& plan)
{
    std::size_t n = plan.units.size();
    std::vector<CellResult> results(n);
    if (n == 0)
        return results;

    int workers = std::max(1, options_.parallelism);
    workers = std::min<int>(workers, static_cast<int>(n));

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= n)
                return;
            try {
                results[i] = run_unit(plan, plan.units[i]);
            } catch (const std::exception& e) {
                // infrastructure failure: encode it instead of losing the cell
                CellResult cell;
                cell.code_id = plan.code_id;
                cell.platform_id = plan.units[i].platform.id;
                cell.revision = plan.revision;
                cell.started_at_ms = now_ms();
                cell.finished_at_ms = cell.started_at_ms;
                cell.build.status = BuildStatus::Failed;
                cell.build.step_index_failed = 0;
                cell.build.log = std::string("executor error: ") + e.what() + "\n";
                cell.test.status = TestStatus::Skipped;
                cell.test.log = "build phase did not succeed; test phase skipped\n";
                results[i] = std::move(cell);
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back(work);
    for (auto& t : pool)
        t.join();
    return results;
}

} // namespace geoforge
