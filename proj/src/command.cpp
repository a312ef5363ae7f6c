#include "geoforge/command.hpp"

#include "geoforge/errors.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

extern char** environ;

namespace geoforge {

namespace {

bool ident_char(char c, bool first)
{
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_')
        return true;
    return !first && c >= '0' && c <= '9';
}

// Returns the identifier inside a "{...}" starting at `pos`, or empty if the
// braces do not enclose a bare identifier.
std::string brace_ident(std::string_view s, std::size_t pos, std::size_t* end)
{
    std::size_t i = pos + 1;
    std::string name;
    while (i < s.size() && ident_char(s[i], name.empty()))
        name += s[i++];
    if (!name.empty() && i < s.size() && s[i] == '}') {
        *end = i + 1;
        return name;
    }
    return {};
}

} // namespace

std::vector<std::string> template_variables(std::string_view tmpl)
{
    std::vector<std::string> names;
    for (std::size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            i += 2;
            continue;
        }
        if (tmpl[i] == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            i += 2;
            continue;
        }
        if (tmpl[i] == '{') {
            std::size_t end = 0;
            std::string name = brace_ident(tmpl, i, &end);
            if (!name.empty()) {
                if (std::find(names.begin(), names.end(), name) == names.end())
                    names.push_back(name);
                i = end;
                continue;
            }
        }
        ++i;
    }
    return names;
}

std::string substitute_template(std::string_view tmpl,
                                const std::map<std::string, std::string>& vars)
{
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out += '{';
            i += 2;
            continue;
        }
        if (tmpl[i] == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out += '}';
            i += 2;
            continue;
        }
        if (tmpl[i] == '{') {
            std::size_t end = 0;
            std::string name = brace_ident(tmpl, i, &end);
            if (!name.empty()) {
                auto it = vars.find(name);
                if (it == vars.end())
                    throw ValidationError("unknown substitution variable {" + name
                                          + "} in command: " + std::string(tmpl));
                out += it->second;
                i = end;
                continue;
            }
        }
        out += tmpl[i++];
    }
    return out;
}

namespace {

std::vector<std::string> merged_environment(const std::map<std::string, std::string>& overrides)
{
    std::vector<std::string> entries;
    for (char** e = environ; e && *e; ++e) {
        std::string_view entry(*e);
        std::size_t eq = entry.find('=');
        std::string name(entry.substr(0, eq == std::string_view::npos ? entry.size() : eq));
        if (!overrides.count(name))
            entries.emplace_back(entry);
    }
    for (const auto& [name, value] : overrides)
        entries.push_back(name + "=" + value);
    return entries;
}

} // namespace

StepResult CommandRunner::run(const std::string& command,
                              const std::filesystem::path& workdir,
                              const std::map<std::string, std::string>& env,
                              std::chrono::milliseconds timeout)
{
    using clock = std::chrono::steady_clock;
    StepResult result;
    auto start = clock::now();

    int out_pipe[2];
    int err_pipe[2];
    if (::pipe(out_pipe) != 0)
        throw ExecError("pipe failed: " + std::string(std::strerror(errno)));
    if (::pipe(err_pipe) != 0) {
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        throw ExecError("pipe failed: " + std::string(std::strerror(errno)));
    }

    std::vector<std::string> env_entries = merged_environment(env);
    std::vector<char*> envp;
    envp.reserve(env_entries.size() + 1);
    for (auto& e : env_entries)
        envp.push_back(e.data());
    envp.push_back(nullptr);

    commands_run_.fetch_add(1);

    pid_t pid = ::fork();
    if (pid < 0) {
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        throw ExecError("fork failed: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        if (!workdir.empty() && ::chdir(workdir.c_str()) != 0)
            _exit(127);
        ::execle("/bin/sh", "sh", "-c", command.c_str(), nullptr, envp.data());
        _exit(127);
    }

    ::setpgid(pid, pid); // both sides race to set it; either wins
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    auto deadline = start + timeout;
    bool killed = false;
    int open_fds = 2;
    struct pollfd fds[2] = {
        {out_pipe[0], POLLIN, 0},
        {err_pipe[0], POLLIN, 0},
    };

    char buf[4096];
    while (open_fds > 0) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
        if (remaining.count() <= 0 && !killed) {
            ::kill(-pid, SIGKILL);
            killed = true;
            result.timed_out = true;
        }
        int wait_ms = killed ? 1000 : static_cast<int>(std::min<std::int64_t>(remaining.count(), 1000));
        if (wait_ms < 0)
            wait_ms = 0;
        int rc = ::poll(fds, 2, wait_ms);
        if (rc < 0) {
            if (errno == EINTR)
                continue;
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP)))
                continue;
            ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                result.output.append(buf, static_cast<std::size_t>(n));
                if (i == 0)
                    result.stdout_text.append(buf, static_cast<std::size_t>(n));
            } else {
                ::close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }
    if (fds[0].fd >= 0)
        ::close(fds[0].fd);
    if (fds[1].fd >= 0)
        ::close(fds[1].fd);

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR)
        ;
    // reap any stragglers left in the group after a timeout kill
    if (killed)
        while (::waitpid(-pid, nullptr, WNOHANG) > 0)
            ;

    if (WIFEXITED(status))
        result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
        result.exit_code = 128 + WTERMSIG(status);

    result.duration_s = std::chrono::duration<double>(clock::now() - start).count();
    return result;
}

} // namespace geoforge
