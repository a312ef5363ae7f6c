#pragma once

#include "geoforge/command.hpp"
#include "geoforge/compare.hpp"
#include "geoforge/manifest.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace geoforge {

enum class BuildStatus { Succeeded, Failed, TimedOut };
enum class TestStatus { Passed, Failed, TimedOut, Skipped };

const char* build_status_name(BuildStatus s);
const char* test_status_name(TestStatus s);

struct BuildResult {
    BuildStatus status = BuildStatus::Failed;
    std::string log;
    double duration_s = 0.0;
    // 1-based over the phase's step sequence: library preparations first,
    // then the code's build steps. Present iff status != Succeeded; for
    // TimedOut it names the step in flight.
    std::optional<int> step_index_failed;
};

struct TestCaseOutcome {
    std::string test_id;
    std::optional<ComparisonResult> comparison; // set when the comparison ran
    std::string error;                          // nonempty on execution error

    bool passed() const { return error.empty() && comparison && comparison->passed; }
};

struct TestPhaseResult {
    TestStatus status = TestStatus::Skipped;
    std::vector<TestCaseOutcome> per_test;
    std::string log;
    double duration_s = 0.0;
};

struct CellResult {
    std::string code_id;
    std::string platform_id;
    std::string revision;
    BuildResult build;
    TestPhaseResult test;
    std::int64_t started_at_ms = 0;
    std::int64_t finished_at_ms = 0;
    std::filesystem::path workdir;
    std::filesystem::path build_log_path;
    std::filesystem::path test_log_path;

    bool green() const
    {
        return build.status == BuildStatus::Succeeded && test.status == TestStatus::Passed;
    }
};

struct CachedLibrary {
    std::string library_id;
    std::string version;
    std::string platform_id;
    std::filesystem::path install_dir;
    std::int64_t built_at_ms = 0;
};

// Precompiled-library store keyed by (library id, version, platform id).
// Entries are built into a staging directory and renamed into place, so a
// failed or interrupted build never becomes a cache entry.
class LibraryCache {
public:
    explicit LibraryCache(std::filesystem::path root);

    std::filesystem::path entry_dir(const LibrarySpec& lib, const PlatformSpec& platform) const;
    std::optional<CachedLibrary> lookup(const LibrarySpec& lib, const PlatformSpec& platform) const;
    std::vector<CachedLibrary> entries() const;

    // Removes entries matching the filters (empty filter = match all).
    // Returns the number of entries removed.
    std::size_t invalidate(const std::string& library_id = {},
                           const std::string& platform_id = {});

    const std::filesystem::path& root() const { return root_; }

    // Serializes concurrent builds of the same key so a shared miss builds
    // exactly once.
    std::unique_lock<std::mutex> lock_key(const std::string& key);

private:
    std::filesystem::path root_;
    std::mutex registry_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
};

// Thrown by prepare_library; carries the captured build log.
class LibraryBuildFailure : public std::runtime_error {
public:
    LibraryBuildFailure(const std::string& what, std::string log, bool timed_out)
        : std::runtime_error(what)
        , log_(std::move(log))
        , timed_out_(timed_out)
    {
    }

    const std::string& log() const { return log_; }
    bool timed_out() const { return timed_out_; }

private:
    std::string log_;
    bool timed_out_;
};

struct ExecutorOptions {
    std::filesystem::path data_dir;
    int parallelism = 4;
};

class Executor {
public:
    Executor(ExecutorOptions options, LibraryCache& cache, CommandRunner& runner);

    // Cache hit returns the entry without running any command; miss builds
    // under the platform env and stores the entry on success.
    CachedLibrary prepare_library(const LibrarySpec& lib, const PlatformSpec& platform,
                                  std::chrono::milliseconds budget);

    // Library preparations followed by the code's build steps, in order,
    // stopping at the first failure; one wall-clock budget for the phase.
    BuildResult run_build_phase(const TestPlan& plan, const PlanUnit& unit,
                                const std::filesystem::path& workdir);

    // Skipped without running anything unless the build succeeded.
    TestPhaseResult run_test_phase(const TestPlan& plan, const PlanUnit& unit,
                                   const BuildResult& build,
                                   const std::filesystem::path& workdir);

    // One CellResult per unit, in plan order, workers bounded by
    // options.parallelism. All failures are encoded in the results.
    std::vector<CellResult> run_plan(const TestPlan& plan);

    std::filesystem::path unit_workdir(const TestPlan& plan, const PlanUnit& unit) const;

private:
    std::filesystem::path libs_aggregate_dir(const std::filesystem::path& workdir) const;
    CellResult run_unit(const TestPlan& plan, const PlanUnit& unit);

    ExecutorOptions options_;
    LibraryCache& cache_;
    CommandRunner& runner_;
};

} // namespace geoforge
