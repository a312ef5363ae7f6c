#include "geoforge/poller.hpp"

#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <json.hpp>

using nlohmann::json;

namespace geoforge {

PollState PollState::load(const std::filesystem::path& path)
{
    PollState state;
    std::error_code ec;
    if (!std::filesystem::exists(path, ec))
        return state;
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded())
        throw ParseError("poll state file is not valid JSON: " + path.string());
    try {
        state.updated_at_ms = j.value("updated_at_ms", std::int64_t{0});
        for (const auto& [code, rev] : j.at("last_seen").items())
            state.last_seen[code] = rev.get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError("poll state file malformed: " + path.string() + ": " + e.what());
    }
    return state;
}

void PollState::save(const std::filesystem::path& path) const
{
    json j;
    j["updated_at_ms"] = updated_at_ms;
    j["last_seen"] = json::object();
    for (const auto& [code, rev] : last_seen)
        j["last_seen"][code] = rev;
    write_text_file_atomic(path, j.dump(2) + "\n");
}

namespace {

// The revision is the first non-empty line of the probe's stdout, trimmed.
std::optional<std::string> extract_revision(const std::string& stdout_text)
{
    for (const auto& line : split_lines(stdout_text)) {
        std::string rev = trim(line);
        if (!rev.empty())
            return rev;
    }
    return std::nullopt;
}

} // namespace

std::vector<ChangeEvent> poll_once(const Manifest& manifest, PollState& state,
                                   CommandRunner& runner, const PollOptions& options)
{
    std::vector<ChangeEvent> events;
    for (const auto& code : manifest.codes) {
        std::filesystem::path scratch = options.scratch_dir;
        if (!scratch.empty()) {
            scratch /= sanitize_path_component(code.id);
            std::error_code ec;
            std::filesystem::create_directories(scratch, ec);
        }
        std::string command;
        try {
            command = substitute_template(code.revision_probe,
                                          {{"workdir", scratch.string()}});
        } catch (const Error& e) {
            log_warn("poll: code " + code.id + ": " + e.what());
            continue;
        }

        StepResult probe = runner.run(command, scratch, {}, options.probe_timeout);
        if (probe.timed_out) {
            log_warn("poll: code " + code.id + ": revision probe timed out");
            continue;
        }
        if (probe.exit_code != 0) {
            log_warn("poll: code " + code.id + ": revision probe exited "
                     + std::to_string(probe.exit_code));
            continue;
        }
        auto revision = extract_revision(probe.stdout_text);
        if (!revision) {
            log_warn("poll: code " + code.id + ": revision probe produced no output");
            continue;
        }

        auto it = state.last_seen.find(code.id);
        if (it != state.last_seen.end() && it->second == *revision)
            continue;

        ChangeEvent ev;
        ev.code_id = code.id;
        if (it != state.last_seen.end())
            ev.old_revision = it->second;
        ev.new_revision = *revision;
        ev.detected_at_ms = now_ms();
        events.push_back(ev);

        state.last_seen[code.id] = *revision;
        state.updated_at_ms = ev.detected_at_ms;
    }
    return events;
}

std::vector<std::int64_t> enqueue_changes(const std::vector<ChangeEvent>& events,
                                          JobQueue& queue)
{
    std::vector<std::int64_t> ids;
    ids.reserve(events.size());
    for (const auto& ev : events)
        ids.push_back(queue.enqueue(JobPayload{ev.code_id, ev.new_revision}));
    return ids;
}

} // namespace geoforge
