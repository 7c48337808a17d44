#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "judgeaudit/core.hpp"

namespace judgeaudit {

struct SandboxConfig {
    std::string interpreter = "python3";
    double timeout_s = 5.0;
    long memory_mb = 256;
    int workers = 4;  // sandbox executions are CPU-bound, separate pool size
};

struct ExecResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

// Runs program text in an isolated child process: fresh temp working dir,
// scrubbed environment, rlimit-capped memory, wall-clock timeout, no stdin.
class Sandbox {
  public:
    explicit Sandbox(SandboxConfig cfg = {});

    const SandboxConfig& config() const { return cfg_; }

    // Writes the program to a temp file and executes it, capturing stdout and
    // stderr. Throws SandboxUnavailable when the interpreter cannot start.
    ExecResult run_program(const std::string& program) const;

    // program + test invocation: expression tests get their printed repr
    // captured, assertion tests pass or fail by exit code.
    ExecResult run_test(const std::string& program, const TestCase& test) const;

    // Does the code parse under the interpreter (compile() without running)?
    bool parses(const std::string& program) const;

  private:
    SandboxConfig cfg_;
};

// True when the test run matches the expectation: expected output (trailing
// whitespace stripped) for expression tests, exit 0 for assertion tests.
bool test_passed(const ExecResult& r, const TestCase& test);

// Does the answer pass every test case? Used for code-side correctness.
bool code_answer_correct(const Sandbox& sandbox, const std::string& program,
                         const std::vector<TestCase>& tests);

}  // namespace judgeaudit
