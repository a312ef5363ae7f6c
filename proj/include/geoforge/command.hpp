#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace geoforge {

// Command templates may reference {workdir}, {libdir}, {revision} and
// {output}; which of those are live depends on the context the command runs
// in. "{{" and "}}" escape literal braces. A brace pair whose content is not
// a bare identifier is left untouched, so shell fragments like
// `awk '{print $1}'` survive.

// Identifiers referenced by the template, in order of first appearance.
std::vector<std::string> template_variables(std::string_view tmpl);

// Expands {name} references; throws ValidationError on a name missing
// from `vars`.
std::string substitute_template(std::string_view tmpl,
                                const std::map<std::string, std::string>& vars);

struct StepResult {
    int exit_code = -1;
    bool timed_out = false;
    double duration_s = 0.0;
    std::string output;      // stdout + stderr, interleaved by arrival
    std::string stdout_text; // stdout only (revision probes read this)

    bool ok() const { return !timed_out && exit_code == 0; }
};

// Runs one shell command line with a merged environment, working directory
// and wall-clock timeout. The command gets its own process group; on timeout
// the whole group is killed. Virtual so tests can stub or instrument it.
class CommandRunner {
public:
    virtual ~CommandRunner() = default;

    virtual StepResult run(const std::string& command,
                           const std::filesystem::path& workdir,
                           const std::map<std::string, std::string>& env,
                           std::chrono::milliseconds timeout);

    // Total commands started through this runner (cache and gating probes).
    std::uint64_t commands_run() const { return commands_run_.load(); }

protected:
    std::atomic<std::uint64_t> commands_run_{0};
};

} // namespace geoforge
