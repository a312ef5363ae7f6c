#include "geoforge/queue.hpp"

#include "geoforge/errors.hpp"
#include "geoforge/util.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

using nlohmann::json;

namespace geoforge {

const char* job_status_name(JobStatus s)
{
    switch (s) {
    case JobStatus::Pending: return "Pending";
    case JobStatus::Claimed: return "Claimed";
    case JobStatus::Done: return "Done";
    case JobStatus::Failed: return "Failed";
    }
    return "?";
}

namespace {

json record_to_snap(const JobRecord& r)
{
    json j;
    j["ev"] = "snap";
    j["id"] = r.job.id;
    j["kind"] = "TestRun";
    j["code"] = r.job.payload.code_id;
    j["rev"] = r.job.payload.revision;
    j["created"] = r.job.created_at_ms;
    j["status"] = job_status_name(r.status);
    j["attempts"] = r.attempts;
    if (r.claimed_at_ms)
        j["claimed"] = *r.claimed_at_ms;
    return j;
}

} // namespace

JobQueue::JobQueue(std::filesystem::path log_path)
    : log_path_(std::move(log_path))
{
    replay();
    open_log();
}

JobQueue::~JobQueue()
{
    if (fd_ >= 0)
        ::close(fd_);
}

void JobQueue::open_log()
{
    fd_ = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd_ < 0)
        throw QueueError("cannot open queue log " + log_path_.string() + ": "
                         + std::strerror(errno));
    // make the directory entry durable too
    std::filesystem::path dir = log_path_.parent_path();
    int dfd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

void JobQueue::append_record(const std::string& json_line)
{
    std::string line = json_line + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
        ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw QueueError("queue log write failed: " + std::string(std::strerror(errno)));
        }
        off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0)
        throw QueueError("queue log fsync failed: " + std::string(std::strerror(errno)));
}

void JobQueue::replay()
{
    records_.clear();
    pending_.clear();
    next_id_ = 1;

    std::error_code ec;
    if (!std::filesystem::exists(log_path_, ec))
        return;

    std::string text = read_text_file(log_path_);
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos)
            break; // torn tail from a crash mid-append; the write never returned
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty())
            continue;

        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw QueueError("queue log corrupt at line " + std::to_string(line_no) + ": "
                             + line);
        auto corrupt = [&](const std::string& why) -> QueueError {
            return QueueError("queue log corrupt at line " + std::to_string(line_no) + " ("
                              + why + "): " + line);
        };
        try {
            std::string ev = j.at("ev").get<std::string>();
            if (ev == "meta") {
                next_id_ = std::max(next_id_, j.at("next").get<std::int64_t>());
            } else if (ev == "enq" || ev == "snap") {
                JobRecord r;
                r.job.id = j.at("id").get<std::int64_t>();
                r.job.payload.code_id = j.at("code").get<std::string>();
                r.job.payload.revision = j.at("rev").get<std::string>();
                r.job.created_at_ms = j.at("created").get<std::int64_t>();
                if (ev == "snap") {
                    std::string st = j.at("status").get<std::string>();
                    if (st == "Pending")
                        r.status = JobStatus::Pending;
                    else if (st == "Claimed")
                        r.status = JobStatus::Claimed;
                    else
                        throw corrupt("snapshot with terminal status");
                    r.attempts = j.at("attempts").get<int>();
                    if (j.contains("claimed"))
                        r.claimed_at_ms = j.at("claimed").get<std::int64_t>();
                }
                if (records_.count(r.job.id))
                    throw corrupt("duplicate job id");
                if (r.status == JobStatus::Pending)
                    pending_.insert(r.job.id);
                next_id_ = std::max(next_id_, r.job.id + 1);
                records_.emplace(r.job.id, std::move(r));
            } else if (ev == "claim") {
                auto it = records_.find(j.at("id").get<std::int64_t>());
                if (it == records_.end())
                    throw corrupt("claim of unknown job");
                JobRecord& r = it->second;
                // a claim on a Claimed job is a re-claim after crash recovery
                if (r.status != JobStatus::Pending && r.status != JobStatus::Claimed)
                    throw corrupt("claim of terminal job");
                r.status = JobStatus::Claimed;
                r.attempts += 1;
                r.claimed_at_ms = j.at("at").get<std::int64_t>();
                pending_.erase(r.job.id);
            } else if (ev == "requeue") {
                auto it = records_.find(j.at("id").get<std::int64_t>());
                if (it == records_.end())
                    throw corrupt("requeue of unknown job");
                if (it->second.status != JobStatus::Claimed)
                    throw corrupt("requeue of non-claimed job");
                it->second.status = JobStatus::Pending;
                pending_.insert(it->first);
            } else if (ev == "ack") {
                auto it = records_.find(j.at("id").get<std::int64_t>());
                if (it == records_.end())
                    throw corrupt("ack of unknown job");
                if (it->second.status != JobStatus::Claimed)
                    throw corrupt("ack of non-claimed job");
                std::string outcome = j.at("outcome").get<std::string>();
                if (outcome == "Done")
                    it->second.status = JobStatus::Done;
                else if (outcome == "Failed")
                    it->second.status = JobStatus::Failed;
                else
                    throw corrupt("unknown outcome");
            } else {
                throw corrupt("unknown event \"" + ev + "\"");
            }
        } catch (const json::exception& e) {
            throw corrupt(e.what());
        }
    }
}

std::int64_t JobQueue::enqueue(const JobPayload& payload)
{
    std::lock_guard<std::mutex> lock(mutex_);
    JobRecord r;
    r.job.id = next_id_;
    r.job.payload = payload;
    r.job.created_at_ms = now_ms();

    json j;
    j["ev"] = "enq";
    j["id"] = r.job.id;
    j["kind"] = "TestRun";
    j["code"] = payload.code_id;
    j["rev"] = payload.revision;
    j["created"] = r.job.created_at_ms;
    append_record(j.dump());

    next_id_ += 1;
    pending_.insert(r.job.id);
    std::int64_t id = r.job.id;
    records_.emplace(id, std::move(r));
    return id;
}

std::optional<JobRecord> JobQueue::claim()
{
    std::lock_guard<std::mutex> lock(mutex_);
    if (pending_.empty())
        return std::nullopt;
    std::int64_t id = *pending_.begin();
    std::int64_t at = now_ms();

    json j;
    j["ev"] = "claim";
    j["id"] = id;
    j["at"] = at;
    append_record(j.dump());

    JobRecord& r = records_.at(id);
    r.status = JobStatus::Claimed;
    r.attempts += 1;
    r.claimed_at_ms = at;
    pending_.erase(pending_.begin());
    return r;
}

void JobQueue::acknowledge(std::int64_t id, JobOutcome outcome)
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = records_.find(id);
    if (it == records_.end())
        throw QueueError("acknowledge: unknown job id " + std::to_string(id));
    if (it->second.status != JobStatus::Claimed)
        throw QueueError("acknowledge: job " + std::to_string(id) + " is "
                         + job_status_name(it->second.status) + ", not Claimed");

    json j;
    j["ev"] = "ack";
    j["id"] = id;
    j["outcome"] = outcome == JobOutcome::Done ? "Done" : "Failed";
    append_record(j.dump());

    it->second.status = outcome == JobOutcome::Done ? JobStatus::Done : JobStatus::Failed;
}

void JobQueue::requeue(std::int64_t id)
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = records_.find(id);
    if (it == records_.end())
        throw QueueError("requeue: unknown job id " + std::to_string(id));
    if (it->second.status != JobStatus::Claimed)
        throw QueueError("requeue: job " + std::to_string(id) + " is "
                         + job_status_name(it->second.status) + ", not Claimed");

    json j;
    j["ev"] = "requeue";
    j["id"] = id;
    append_record(j.dump());

    it->second.status = JobStatus::Pending;
    pending_.insert(id);
}

std::size_t JobQueue::recover()
{
    std::lock_guard<std::mutex> lock(mutex_);
    std::size_t count = 0;
    for (auto& [id, r] : records_) {
        if (r.status == JobStatus::Claimed) {
            r.status = JobStatus::Pending;
            pending_.insert(id);
            ++count;
        }
    }
    return count;
}

void JobQueue::compact()
{
    std::lock_guard<std::mutex> lock(mutex_);
    std::string out;
    {
        json meta;
        meta["ev"] = "meta";
        meta["next"] = next_id_;
        out += meta.dump();
        out += "\n";
    }
    for (const auto& [id, r] : records_) {
        if (r.status == JobStatus::Done || r.status == JobStatus::Failed)
            continue;
        out += record_to_snap(r).dump();
        out += "\n";
    }
    write_text_file_atomic(log_path_, out);

    if (fd_ >= 0)
        ::close(fd_);
    open_log();

    for (auto it = records_.begin(); it != records_.end();) {
        if (it->second.status == JobStatus::Done || it->second.status == JobStatus::Failed)
            it = records_.erase(it);
        else
            ++it;
    }
}

std::vector<JobRecord> JobQueue::list() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<JobRecord> out;
    out.reserve(records_.size());
    for (const auto& [id, r] : records_)
        out.push_back(r);
    return out;
}

std::optional<JobRecord> JobQueue::find(std::int64_t id) const
{
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = records_.find(id);
    if (it == records_.end())
        return std::nullopt;
    return it->second;
}

std::size_t JobQueue::pending_count() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    return pending_.size();
}

} // namespace geoforge
