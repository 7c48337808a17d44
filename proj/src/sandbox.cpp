#include "judgeaudit/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>

#include <nlohmann/json.hpp>

#include "judgeaudit/util.hpp"

namespace judgeaudit {

namespace {

std::filesystem::path fresh_temp_dir() {
    static std::atomic<unsigned long> counter{0};
    const auto base = std::filesystem::temp_directory_path() / "judgeaudit-sbx";
    std::filesystem::create_directories(base);
    const auto dir = base / (std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

void drain_fd(int fd, std::string& sink) {
    char buf[4096];
    for (;;) {
        const ssize_t n = ::read(fd, buf, sizeof buf);
        if (n <= 0) break;
        sink.append(buf, static_cast<size_t>(n));
    }
}

std::string rstrip_lines(const std::string& s) {
    std::string out;
    std::string line;
    for (size_t i = 0; i <= s.size(); i++) {
        if (i == s.size() || s[i] == '\n') {
            size_t e = line.size();
            while (e > 0 && (line[e - 1] == ' ' || line[e - 1] == '\t' || line[e - 1] == '\r')) e--;
            out += line.substr(0, e);
            if (i != s.size()) out.push_back('\n');
            line.clear();
        } else {
            line.push_back(s[i]);
        }
    }
    while (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

}  // namespace

Sandbox::Sandbox(SandboxConfig cfg) : cfg_(std::move(cfg)) {}

ExecResult Sandbox::run_program(const std::string& program) const {
    const auto dir = fresh_temp_dir();
    const auto script = dir / "main.py";
    write_file(script, program);

    int out_pipe[2], err_pipe[2];
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
        fail(Err::SandboxUnavailable, "pipe() failed");

    const pid_t pid = ::fork();
    if (pid < 0) fail(Err::SandboxUnavailable, "fork() failed");

    if (pid == 0) {
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        ::close(STDIN_FILENO);
        if (::chdir(dir.c_str()) != 0) _exit(127);

        if (cfg_.memory_mb > 0) {
            rlimit lim{};
            lim.rlim_cur = lim.rlim_max = static_cast<rlim_t>(cfg_.memory_mb) * 1024 * 1024;
            ::setrlimit(RLIMIT_AS, &lim);
        }
        rlimit cpu{};
        cpu.rlim_cur = cpu.rlim_max = static_cast<rlim_t>(cfg_.timeout_s) + 2;
        ::setrlimit(RLIMIT_CPU, &cpu);

        // Scrubbed environment: no credentials or proxy settings leak in.
        const char* path_env = "PATH=/usr/local/bin:/usr/bin:/bin";
        char* envp[] = {const_cast<char*>(path_env), nullptr};
        char* argv[] = {const_cast<char*>(cfg_.interpreter.c_str()),
                        const_cast<char*>("-I"),  // isolated mode: ignore user site/env
                        const_cast<char*>(script.c_str()), nullptr};
        ::execvpe(cfg_.interpreter.c_str(), argv, envp);
        _exit(127);
    }

    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
    ::fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

    ExecResult result;
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(static_cast<long>(cfg_.timeout_s * 1000));
    bool open_out = true, open_err = true;
    int status = 0;
    bool exited = false;

    for (;;) {
        if (!exited) {
            const pid_t w = ::waitpid(pid, &status, WNOHANG);
            if (w == pid) exited = true;
        }
        const bool past_deadline = std::chrono::steady_clock::now() > deadline;
        if (past_deadline && !exited) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            result.timed_out = true;
            exited = true;
        }
        pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
        ::poll(fds, 2, 20);
        if (open_out) {
            char buf[4096];
            ssize_t n;
            while ((n = ::read(out_pipe[0], buf, sizeof buf)) > 0)
                result.out.append(buf, static_cast<size_t>(n));
            if (n == 0) open_out = false;
        }
        if (open_err) {
            char buf[4096];
            ssize_t n;
            while ((n = ::read(err_pipe[0], buf, sizeof buf)) > 0)
                result.err.append(buf, static_cast<size_t>(n));
            if (n == 0) open_err = false;
        }
        if (exited && !open_out && !open_err) break;
        // a leaked descriptor (stray grandchild) must not outlive the deadline
        if (past_deadline) break;
    }
    drain_fd(out_pipe[0], result.out);
    drain_fd(err_pipe[0], result.err);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);

    if (result.timed_out) {
        result.exit_code = -1;
    } else if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else {
        result.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    }
    if (result.exit_code == 127)
        fail(Err::SandboxUnavailable, "cannot start interpreter " + cfg_.interpreter);

    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    return result;
}

ExecResult Sandbox::run_test(const std::string& program, const TestCase& test) const {
    std::string harness = program;
    harness += "\n\n";
    if (test.expected.empty()) {
        harness += test.call;  // assertion statement: pass/fail by exit code
        harness += "\n";
    } else {
        harness += "print(repr(" + test.call + "))\n";
    }
    return run_program(harness);
}

bool Sandbox::parses(const std::string& program) const {
    // compile() only: syntax gate without executing the code under test
    const auto dir = fresh_temp_dir();
    const auto payload = dir / "payload.py";
    write_file(payload, program);
    const std::string quoted = ordered_json(payload.string()).dump();
    const std::string loader =
        "src = open(" + quoted + ").read()\ncompile(src, 'payload.py', 'exec')\n";
    const auto r = run_program(loader);
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
    return r.exit_code == 0 && !r.timed_out;
}

bool test_passed(const ExecResult& r, const TestCase& test) {
    if (r.timed_out || r.exit_code != 0) return false;
    if (test.expected.empty()) return true;
    return rstrip_lines(r.out) == rstrip_lines(test.expected);
}

bool code_answer_correct(const Sandbox& sandbox, const std::string& program,
                         const std::vector<TestCase>& tests) {
    for (const auto& t : tests) {
        if (!test_passed(sandbox.run_test(program, t), t)) return false;
    }
    return true;
}

}  // namespace judgeaudit
