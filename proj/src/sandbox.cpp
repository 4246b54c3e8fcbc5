#include "motkit/sandbox.hpp"

#include "motkit/parallel.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <system_error>

extern char** environ;

namespace motkit::sandbox {
namespace {

using Clock = std::chrono::steady_clock;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

[[noreturn]] void throw_errno(const std::string& what) {
  throw InfrastructureError(what + ": " + std::strerror(errno));
}

std::pair<Fd, Fd> make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw_errno("pipe2");
  return {Fd(fds[0]), Fd(fds[1])};
}

class ScratchDir {
 public:
  ScratchDir(const std::filesystem::path& root, bool keep) : keep_(keep) {
    auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
    std::string tmpl = (base / "motkit-run-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw_errno("mkdtemp " + tmpl);
    path_ = tmpl;
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  ~ScratchDir() {
    if (keep_) return;
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool keep_;
};

std::vector<std::string> split_command(std::string_view cmd) {
  std::vector<std::string> out;
  std::string cur;
  bool in_quotes = false, have = false;
  for (char c : cmd) {
    if (c == '"') {
      in_quotes = !in_quotes;
      have = true;
    } else if ((c == ' ' || c == '\t') && !in_quotes) {
      if (have) out.push_back(std::move(cur));
      cur.clear();
      have = false;
    } else {
      cur.push_back(c);
      have = true;
    }
  }
  if (have) out.push_back(std::move(cur));
  return out;
}

std::string resolve_executable(const std::string& name) {
  auto executable = [](const std::string& p) {
    struct stat st {};
    return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
           ::access(p.c_str(), X_OK) == 0;
  };
  if (name.find('/') != std::string::npos) {
    return executable(name) ? name : std::string{};
  }
  const char* path_env = std::getenv("PATH");
  std::string_view dirs = path_env ? path_env : "/usr/local/bin:/usr/bin:/bin";
  while (!dirs.empty()) {
    auto colon = dirs.find(':');
    std::string dir(dirs.substr(0, colon));
    dirs = colon == std::string_view::npos ? std::string_view{}
                                           : dirs.substr(colon + 1);
    if (dir.empty()) dir = ".";
    std::string candidate = dir + "/" + name;
    if (executable(candidate)) return candidate;
  }
  return {};
}

std::vector<std::string> build_argv(const RunnerConfig& runner,
                                    const std::string& file) {
  auto argv = split_command(runner.command);
  if (argv.empty()) throw InfrastructureError("empty runner command");
  for (auto& arg : argv) {
    for (auto pos = arg.find("{file}"); pos != std::string::npos;
         pos = arg.find("{file}", pos + file.size())) {
      arg.replace(pos, 6, file);
    }
  }
  auto resolved = resolve_executable(argv[0]);
  if (resolved.empty()) {
    throw InfrastructureError("runner executable not found: " + argv[0]);
  }
  argv[0] = resolved;
  return argv;
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw InfrastructureError("cannot write " + path.string());
}

// Appends up to `cap - buf.size()` bytes; returns false on EOF.
bool drain(int fd, std::string& buf, std::uint64_t cap, bool& overflow) {
  char chunk[65536];
  for (;;) {
    ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n > 0) {
      auto room = cap > buf.size() ? cap - buf.size() : 0;
      if (static_cast<std::uint64_t>(n) > room) overflow = true;
      buf.append(chunk, static_cast<std::size_t>(
                            std::min<std::uint64_t>(room, n)));
      continue;
    }
    if (n == 0) return false;
    if (errno == EINTR) continue;
    return true;  // EAGAIN
  }
}

bool looks_like_oom(const std::string& err) {
  return err.find("MemoryError") != std::string::npos ||
         err.find("std::bad_alloc") != std::string::npos ||
         err.find("Cannot allocate memory") != std::string::npos;
}

}  // namespace

void ResourceLimits::validate() const {
  if (!(wall_time.count() > 0) || memory == 0 || output_cap == 0) {
    throw std::invalid_argument("resource limits must be strictly positive");
  }
}

std::string_view to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::ok: return "ok";
    case ExecStatus::timeout: return "timeout";
    case ExecStatus::oom: return "oom";
    case ExecStatus::runtime_error: return "runtime_error";
    case ExecStatus::output_overflow: break;
  }
  return "output_overflow";
}

std::optional<ExecStatus> parse_exec_status(std::string_view text) {
  for (auto s : {ExecStatus::ok, ExecStatus::timeout, ExecStatus::oom,
                 ExecStatus::runtime_error, ExecStatus::output_overflow}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void check_runner(const RunnerConfig& runner) {
  build_argv(runner, runner.file_name);
}

ExecutionReport run_once(std::string_view program, std::string_view stdin_text,
                         const ResourceLimits& limits,
                         const RunnerConfig& runner) {
  limits.validate();
  ScratchDir scratch(runner.scratch_root, runner.keep_scratch);
  const auto program_path = scratch.path() / runner.file_name;
  const auto stdin_path = scratch.path() / "stdin.txt";
  write_file(program_path, program);
  write_file(stdin_path, stdin_text);

  // Everything the child touches is prepared before fork: the child may
  // only make async-signal-safe calls since the harness is multi-threaded.
  auto args = build_argv(runner, program_path.string());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_store;
  for (char** e = environ; e && *e; ++e) {
    if (std::strncmp(*e, "PYTHONHASHSEED=", 15) != 0) env_store.emplace_back(*e);
  }
  env_store.emplace_back("PYTHONHASHSEED=0");
  env_store.emplace_back("PYTHONDONTWRITEBYTECODE=1");
  std::vector<char*> envp;
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);

  const std::string workdir = scratch.path().string();
  Fd in_fd(::open(stdin_path.c_str(), O_RDONLY | O_CLOEXEC));
  if (!in_fd) throw_errno("open stdin file");
  auto [out_r, out_w] = make_pipe();
  auto [err_r, err_w] = make_pipe();
  auto [exec_r, exec_w] = make_pipe();

  rlimit as_limit{static_cast<rlim_t>(limits.memory),
                  static_cast<rlim_t>(limits.memory)};
  rlimit no_core{0, 0};

  const auto start = Clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw_errno("fork");
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::dup2(in_fd.get(), 0) < 0 || ::dup2(out_w.get(), 1) < 0 ||
        ::dup2(err_w.get(), 2) < 0 || ::chdir(workdir.c_str()) != 0 ||
        ::setrlimit(RLIMIT_AS, &as_limit) != 0) {
      int err = errno;
      (void)!::write(exec_w.get(), &err, sizeof err);
      ::_exit(127);
    }
    ::setrlimit(RLIMIT_CORE, &no_core);
    ::execve(argv[0], argv.data(), envp.data());
    int err = errno;
    (void)!::write(exec_w.get(), &err, sizeof err);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  in_fd.reset();
  out_w.reset();
  err_w.reset();
  exec_w.reset();

  ExecutionReport report;
  bool out_overflow = false, err_overflow = false;
  bool out_open = true, err_open = true, exited = false;
  bool timed_out = false, killed_for_output = false;
  int wait_status = 0;
  rusage usage{};
  ::fcntl(out_r.get(), F_SETFL, O_NONBLOCK);
  ::fcntl(err_r.get(), F_SETFL, O_NONBLOCK);
  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(limits.wall_time);

  auto kill_group = [pid] {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
  };

  Clock::time_point exit_time;
  while (!exited || out_open || err_open) {
    // A descendant that escaped the process group may hold the pipes open.
    if (exited && Clock::now() - exit_time > std::chrono::seconds(1)) break;
    if (!exited) {
      pid_t r = ::wait4(pid, &wait_status, WNOHANG, &usage);
      if (r == pid) {
        exited = true;
        exit_time = Clock::now();
        report.wall_time_used =
            std::chrono::duration<double>(exit_time - start).count();
        // Reap stragglers the candidate may have forked.
        ::kill(-pid, SIGKILL);
      }
    }
    if (!exited && !timed_out && Clock::now() >= deadline) {
      timed_out = true;
      kill_group();
    }
    if (!exited && !killed_for_output && (out_overflow || err_overflow)) {
      killed_for_output = true;
      kill_group();
    }

    pollfd fds[2];
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out_r.get(), POLLIN, 0};
    if (err_open) fds[nfds++] = {err_r.get(), POLLIN, 0};
    int wait_ms = 5;
    if (!exited && !timed_out) {
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                           deadline - Clock::now())
                           .count();
      wait_ms = static_cast<int>(std::clamp<long long>(remaining, 0, 5));
    }
    if (nfds == 0) {
      if (!exited) ::usleep(static_cast<useconds_t>(wait_ms) * 1000);
      continue;
    }
    int pr = ::poll(fds, nfds, wait_ms);
    if (pr < 0 && errno != EINTR) {
      kill_group();
      throw_errno("poll");
    }
    if (out_open) {
      out_open = drain(out_r.get(), report.stdout_text, limits.output_cap,
                       out_overflow);
    }
    if (err_open) {
      err_open = drain(err_r.get(), report.stderr_text, limits.output_cap,
                       err_overflow);
    }
  }

  int exec_errno = 0;
  if (::read(exec_r.get(), &exec_errno, sizeof exec_errno) ==
      static_cast<ssize_t>(sizeof exec_errno)) {
    throw InfrastructureError(std::string("cannot launch runner ") + argv[0] +
                              ": " + std::strerror(exec_errno));
  }

  report.peak_memory = static_cast<std::uint64_t>(usage.ru_maxrss) * 1024u;
  if (WIFEXITED(wait_status)) {
    report.exit_code = WEXITSTATUS(wait_status);
  } else if (WIFSIGNALED(wait_status)) {
    report.exit_code = -WTERMSIG(wait_status);
  }

  if (timed_out) {
    report.status = ExecStatus::timeout;
  } else if (out_overflow || err_overflow) {
    report.status = ExecStatus::output_overflow;
  } else if (report.exit_code != 0) {
    report.status = (looks_like_oom(report.stderr_text) ||
                     report.peak_memory >= limits.memory)
                        ? ExecStatus::oom
                        : ExecStatus::runtime_error;
  } else {
    report.status = ExecStatus::ok;
  }
  return report;
}

bool compare_output(std::string_view expected, std::string_view actual,
                    const ComparePolicy& policy) {
  if (policy.mode == ComparePolicy::Mode::exact) return expected == actual;

  auto next_token = [](std::string_view& s) -> std::string_view {
    auto is_space = [](char c) {
      return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' ||
             c == '\v';
    };
    std::size_t i = 0;
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    auto tok = s.substr(i, j - i);
    s.remove_prefix(j);
    return tok;
  };
  auto as_number = [](std::string_view tok) -> std::optional<double> {
    if (tok.empty()) return std::nullopt;
    std::string owned(tok);
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(owned.c_str(), &end);
    if (end != owned.c_str() + owned.size() || errno == ERANGE ||
        !std::isfinite(v)) {
      return std::nullopt;
    }
    return v;
  };

  for (;;) {
    auto a = next_token(expected);
    auto b = next_token(actual);
    if (a.empty() || b.empty()) return a.empty() && b.empty();
    if (a == b) continue;
    auto x = as_number(a);
    auto y = as_number(b);
    if (!x || !y || !(std::abs(*x - *y) <= policy.float_tolerance)) {
      return false;
    }
  }
}

std::vector<bool> JudgeVerdict::matched_vector() const {
  std::vector<bool> v;
  v.reserve(per_test.size());
  for (const auto& t : per_test) v.push_back(t.matched);
  return v;
}

const TestOutcome* JudgeVerdict::failing_outcome() const {
  return first_failure ? &per_test.at(*first_failure) : nullptr;
}

JudgeVerdict judge(std::string_view program, const corpus::Problem& problem,
                   const JudgeOptions& options) {
  if (problem.untestable || problem.tests.empty()) {
    throw std::invalid_argument("problem '" + problem.id +
                                "' has no tests to judge against");
  }
  JudgeVerdict verdict;
  verdict.per_test.reserve(problem.tests.size());
  for (std::size_t i = 0; i < problem.tests.size(); ++i) {
    const auto& test = problem.tests[i];
    TestOutcome outcome;
    outcome.report = run_once(program, test.input, options.limits,
                              options.runner);
    outcome.matched =
        outcome.report.status == ExecStatus::ok &&
        compare_output(test.expected_output, outcome.report.stdout_text,
                       options.policy);
    if (!outcome.matched && !verdict.first_failure) verdict.first_failure = i;
    verdict.per_test.push_back(std::move(outcome));
    if (verdict.first_failure && options.fail_fast) break;
  }
  verdict.passed = !verdict.first_failure;
  double t = 0.0, m = 0.0;
  for (const auto& o : verdict.per_test) {
    t += o.report.wall_time_used;
    m += static_cast<double>(o.report.peak_memory);
  }
  auto n = static_cast<double>(verdict.per_test.size());
  verdict.avg_time = t / n;
  verdict.avg_peak_memory = m / n;
  return verdict;
}

JudgePool::JudgePool(JudgeOptions options, std::size_t workers)
    : options_(std::move(options)), workers_(std::max<std::size_t>(workers, 1)) {}

std::vector<JudgeVerdict> JudgePool::judge_all(
    std::span<const JudgeJob> jobs) const {
  std::vector<JudgeVerdict> out(jobs.size());
  parallel_for(jobs.size(), workers_, [&](std::size_t i) {
    out[i] = judge(jobs[i].program, *jobs[i].problem, options_);
  });
  return out;
}

}  // namespace motkit::sandbox
