#include "eivar/problems.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>

namespace eivar {

namespace {

using Clock = std::chrono::steady_clock;

struct Child {
    pid_t pid = -1;
    int in = -1;   // write end of the child's stdin
    int out = -1;  // read end of the child's stdout
    bool reaped = false;

    ~Child() {
        if (in >= 0) ::close(in);
        if (out >= 0) ::close(out);
        if (pid > 0 && !reaped) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, nullptr, 0);
        }
    }
};

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void spawn(Child& c, const std::vector<std::string>& command) {
    if (command.empty()) throw SimulatorFailure("external simulator: empty command");
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw SimulatorFailure("external simulator: pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
        ::close(to_child[0]);
        ::close(to_child[1]);
        throw SimulatorFailure("external simulator: pipe failed");
    }
    std::vector<char*> argv;
    for (const auto& s : command) argv.push_back(const_cast<char*>(s.c_str()));
    argv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw SimulatorFailure("external simulator: fork failed");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    c.pid = pid;
    c.in = to_child[1];
    c.out = from_child[0];
}

double remaining_ms(Clock::time_point deadline) {
    return std::chrono::duration<double, std::milli>(deadline - Clock::now()).count();
}

std::string read_line(Child& c, Clock::time_point deadline) {
    std::string line;
    char buf[4096];
    for (;;) {
        const auto nl = line.find('\n');
        if (nl != std::string::npos) return line.substr(0, nl);
        const double ms = remaining_ms(deadline);
        if (ms <= 0) throw Timeout("external simulator: timed out waiting for a response");
        pollfd pfd{c.out, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, static_cast<int>(ms) + 1);
        if (rc < 0 && errno == EINTR) continue;
        if (rc == 0) continue;
        const ssize_t n = ::read(c.out, buf, sizeof buf);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            if (!line.empty()) return line;
            throw ProtocolViolation("external simulator: closed stdout without a response");
        }
        line.append(buf, static_cast<std::size_t>(n));
    }
}

int wait_exit(Child& c, Clock::time_point deadline) {
    for (;;) {
        int status = 0;
        const pid_t r = ::waitpid(c.pid, &status, WNOHANG);
        if (r == c.pid) {
            c.reaped = true;
            if (WIFEXITED(status)) return WEXITSTATUS(status);
            return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
        }
        if (remaining_ms(deadline) <= 0) throw Timeout("external simulator: child did not exit");
        ::usleep(1000);
    }
}

}  // namespace

Vector external_simulate(const ExternalSimulator& sim, const Vector& theta, Index request_id) {
    static std::atomic<Index> counter{0};
    if (request_id == 0) request_id = ++counter;
    ignore_sigpipe();
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(
                           std::chrono::duration<double>(sim.timeout_seconds));
    Child child;
    spawn(child, sim.command);

    nlohmann::json req;
    req["id"] = request_id;
    req["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
    const std::string msg = req.dump() + "\n";
    std::size_t off = 0;
    while (off < msg.size()) {
        const ssize_t n = ::write(child.in, msg.data() + off, msg.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) throw ProtocolViolation("external simulator: could not write the request");
        off += static_cast<std::size_t>(n);
    }
    ::close(child.in);
    child.in = -1;

    const std::string line = read_line(child, deadline);
    nlohmann::json resp;
    try {
        resp = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw ProtocolViolation("external simulator: response is not valid JSON");
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer() ||
        resp["id"].get<Index>() != request_id) {
        throw ProtocolViolation("external simulator: response id missing or mismatched");
    }
    const int code = wait_exit(child, deadline);
    if (resp.contains("error")) {
        const std::string e = resp["error"].is_string() ? resp["error"].get<std::string>() : "?";
        throw SimulatorFailure("external simulator reported: " + e);
    }
    if (code != 0) {
        throw NonzeroExit("external simulator exited with status " + std::to_string(code));
    }
    if (!resp.contains("eta") || !resp["eta"].is_array()) {
        throw ProtocolViolation("external simulator: response lacks an eta array");
    }
    Vector eta(static_cast<Index>(resp["eta"].size()));
    for (Index i = 0; i < eta.size(); ++i) {
        const auto& v = resp["eta"][static_cast<std::size_t>(i)];
        if (!v.is_number()) throw ProtocolViolation("external simulator: eta entry is not a number");
        eta(i) = v.get<double>();
    }
    if (!eta.allFinite()) throw ProtocolViolation("external simulator: eta entry is not finite");
    return eta;
}

}  // namespace eivar
