#pragma once

#include "geoforge/command.hpp"
#include "geoforge/manifest.hpp"
#include "geoforge/queue.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geoforge {

// Last revision seen per code. Saved atomically (temp file + rename).
struct PollState {
    std::map<std::string, std::string> last_seen;
    std::int64_t updated_at_ms = 0;

    // Missing file loads as an empty state: every code looks new.
    static PollState load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

struct ChangeEvent {
    std::string code_id;
    std::optional<std::string> old_revision;
    std::string new_revision;
    std::int64_t detected_at_ms = 0;
};

struct PollOptions {
    std::chrono::milliseconds probe_timeout{60'000};
    std::filesystem::path scratch_dir; // {workdir} for revision probes
};

// Probes every code once. Codes whose probed revision differs from last_seen
// produce a ChangeEvent and have `state` updated in memory; probe failures
// are logged and leave that code's state untouched. The caller persists
// `state` only after the events are enqueued, so a crash in between
// re-detects the change instead of losing it.
std::vector<ChangeEvent> poll_once(const Manifest& manifest, PollState& state,
                                   CommandRunner& runner, const PollOptions& options);

// One TestRun job per event. Throws on storage errors without touching state.
std::vector<std::int64_t> enqueue_changes(const std::vector<ChangeEvent>& events,
                                          JobQueue& queue);

} // namespace geoforge
