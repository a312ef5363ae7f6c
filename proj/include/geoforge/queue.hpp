#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace geoforge {

enum class JobKind { TestRun };
enum class JobStatus { Pending, Claimed, Done, Failed };
enum class JobOutcome { Done, Failed };

const char* job_status_name(JobStatus s);

struct JobPayload {
    std::string code_id;
    std::string revision;

    bool operator==(const JobPayload&) const = default;
    auto operator<=>(const JobPayload&) const = default;
};

struct Job {
    std::int64_t id = 0;
    JobKind kind = JobKind::TestRun;
    JobPayload payload;
    std::int64_t created_at_ms = 0;
};

struct JobRecord {
    Job job;
    JobStatus status = JobStatus::Pending;
    int attempts = 0;
    std::optional<std::int64_t> claimed_at_ms;
};

// Durable FIFO queue backed by an append-only log of queue events. Every
// mutation is fsynced to the log before the in-memory state changes, so the
// log replayed at startup is the authoritative state. A torn final line
// (crash mid-append) is discarded; any other malformed record is corruption.
class JobQueue {
public:
    explicit JobQueue(std::filesystem::path log_path);
    ~JobQueue();

    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    // Durably appends the job; returns its id. Ids are strictly increasing
    // and never reused, even across restarts and compactions.
    std::int64_t enqueue(const JobPayload& payload);

    // Oldest Pending job -> Claimed (attempts + 1), or nullopt when none.
    std::optional<JobRecord> claim();

    // Claimed -> Done/Failed. Terminal states are final.
    void acknowledge(std::int64_t id, JobOutcome outcome);

    // Claimed -> Pending without touching attempts; used to retry a job
    // whose execution hit an infrastructure error.
    void requeue(std::int64_t id);

    // Returns every Claimed job to Pending. Call once at process start,
    // before any claim: a Claimed job in the replayed log was orphaned by a
    // crash. Purely an in-memory reinterpretation; writes nothing.
    std::size_t recover();

    // Rewrites the log keeping only non-terminal records (plus the id
    // high-water mark).
    void compact();

    std::vector<JobRecord> list() const; // sorted by id
    std::optional<JobRecord> find(std::int64_t id) const;
    std::size_t pending_count() const;

private:
    void append_record(const std::string& json_line);
    void replay();
    void open_log();

    std::filesystem::path log_path_;
    int fd_ = -1;
    mutable std::mutex mutex_;
    std::map<std::int64_t, JobRecord> records_;
    std::set<std::int64_t> pending_; // id order == FIFO order
    std::int64_t next_id_ = 1;
};

} // namespace geoforge
