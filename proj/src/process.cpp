// Copyright 2026 The portjob Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "portjob/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/eventfd.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "portjob/error.hpp"

extern char** environ;

namespace portjob {

namespace {

constexpr const char* kDefaultPath = "/usr/local/bin:/usr/bin:/bin";

// Steps reported back through the exec-error pipe.
enum SpawnStage : int { kStageChdir = 1, kStageStdin, kStageStdout, kStageStderr, kStageExec };

const char* stage_name(int stage) {
  switch (stage) {
    case kStageChdir: return "cannot enter working directory";
    case kStageStdin: return "cannot open stdin";
    case kStageStdout: return "cannot open stdout";
    case kStageStderr: return "cannot open stderr";
    case kStageExec: return "cannot execute";
  }
  return "unknown failure";
}

void close_fds_except(int keep) {
  const unsigned max = ~0U;
  if (keep < 0) {
    syscall(SYS_close_range, 3U, max, 0U);
    return;
  }
  if (keep > 3) syscall(SYS_close_range, 3U, static_cast<unsigned>(keep - 1), 0U);
  syscall(SYS_close_range, static_cast<unsigned>(keep + 1), max, 0U);
}

void reset_signals() {
  struct sigaction sa{};
  sa.sa_handler = SIG_DFL;
  sigemptyset(&sa.sa_mask);
  for (int sig = 1; sig < NSIG; ++sig) {
    if (sig == SIGKILL || sig == SIGSTOP) continue;
    sigaction(sig, &sa, nullptr);
  }
  sigset_t none;
  sigemptyset(&none);
  sigprocmask(SIG_SETMASK, &none, nullptr);
}

[[noreturn]] void child_fail(int fd, int stage) {
  int payload[2] = {stage, errno};
  ssize_t ignored = write(fd, payload, sizeof payload);
  (void)ignored;
  _exit(127);
}

bool redirect(const char* path, int target, int flags) {
  int fd = open(path, flags, 0644);
  if (fd < 0) return false;
  if (fd != target) {
    if (dup2(fd, target) < 0) return false;
    close(fd);
  }
  return true;
}

std::vector<std::string> env_strings(const Environment& env) {
  std::vector<std::string> out;
  out.reserve(env.size());
  for (const auto& [k, v] : env) out.push_back(k + "=" + v);
  return out;
}

std::vector<char*> c_strings(std::vector<std::string>& strings) {
  std::vector<char*> out;
  out.reserve(strings.size() + 1);
  for (auto& s : strings) out.push_back(s.data());
  out.push_back(nullptr);
  return out;
}

Environment current_environment() {
  Environment env;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    env.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return env;
}

}  // namespace

Environment minimal_base_environment() {
  Environment env;
  env["PATH"] = kDefaultPath;
  const char* home = std::getenv("HOME");
  env["HOME"] = home ? home : "/";
  return env;
}

std::string resolve_program(const std::string& program, const Environment& env) {
  if (program.empty()) return {};
  if (program.find('/') != std::string::npos) return program;
  auto it = env.find("PATH");
  std::string path = it != env.end() ? it->second : kDefaultPath;
  std::stringstream ss(path);
  std::string dir;
  while (std::getline(ss, dir, ':')) {
    if (dir.empty()) dir = ".";
    auto candidate = dir + "/" + program;
    struct stat st{};
    if (stat(candidate.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
        access(candidate.c_str(), X_OK) == 0) {
      return candidate;
    }
  }
  return {};
}

ExitInfo decode_wait_status(int status) {
  ExitInfo info;
  if (WIFEXITED(status)) info.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) info.signal = WTERMSIG(status);
  return info;
}

pid_t spawn_process(const SpawnRequest& request) {
  if (request.argv.empty()) throw SubmitFailed("spawn failed: empty argv");
  std::string program = resolve_program(request.argv.front(), request.environment);
  if (program.empty()) {
    throw SubmitFailed("spawn failed: executable '" + request.argv.front() +
                       "' not found in PATH");
  }
  auto argv_storage = request.argv;
  auto argv = c_strings(argv_storage);
  auto env_storage = env_strings(request.environment);
  auto envp = c_strings(env_storage);
  const std::string in_path = request.stdin_path.value_or("/dev/null");
  const std::string out_path = request.stdout_path.value_or("/dev/null");
  const std::string err_path = request.stderr_path.value_or("/dev/null");
  const bool err_to_out = request.stderr_path && request.stdout_path &&
                          *request.stderr_path == *request.stdout_path;
  const pid_t group = request.process_group;
  const int out_flags = O_WRONLY | O_CREAT | (request.truncate_output ? O_TRUNC : 0) |
                        (request.append_output ? O_APPEND : 0);

  int pipefd[2];
  if (pipe2(pipefd, O_CLOEXEC) != 0) {
    throw SubmitFailed(std::string("spawn failed: pipe: ") + std::strerror(errno));
  }
  pid_t pid = fork();
  if (pid < 0) {
    int err = errno;
    close(pipefd[0]);
    close(pipefd[1]);
    throw SubmitFailed(std::string("spawn failed: fork: ") + std::strerror(err));
  }
  if (pid == 0) {
    close(pipefd[0]);
    const int report = pipefd[1];
    setpgid(0, group);
    reset_signals();
    if (request.directory && chdir(request.directory->c_str()) != 0) {
      child_fail(report, kStageChdir);
    }
    if (!redirect(in_path.c_str(), 0, O_RDONLY)) child_fail(report, kStageStdin);
    if (!redirect(out_path.c_str(), 1, out_flags)) {
      child_fail(report, kStageStdout);
    }
    if (err_to_out) {
      if (dup2(1, 2) < 0) child_fail(report, kStageStderr);
    } else if (!redirect(err_path.c_str(), 2, out_flags)) {
      child_fail(report, kStageStderr);
    }
    close_fds_except(report);
    execve(program.c_str(), argv.data(), envp.data());
    child_fail(report, kStageExec);
  }
  setpgid(pid, group == 0 ? pid : group);
  close(pipefd[1]);
  int payload[2] = {0, 0};
  ssize_t n;
  do {
    n = read(pipefd[0], payload, sizeof payload);
  } while (n < 0 && errno == EINTR);
  close(pipefd[0]);
  if (n > 0) {
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    std::string what = stage_name(payload[0]);
    if (payload[0] == kStageChdir && request.directory) what += " '" + *request.directory + "'";
    if (payload[0] == kStageExec) what += " '" + request.argv.front() + "'";
    throw SubmitFailed("spawn failed: " + what + ": " + std::strerror(payload[1]));
  }
  return pid;
}

CommandResult run_command(const std::vector<std::string>& argv_in, const Environment& extra_env,
                          const std::optional<std::string>& input) {
  CommandResult result;
  if (argv_in.empty()) {
    result.err = "empty command";
    return result;
  }
  Environment env = current_environment();
  for (const auto& [k, v] : extra_env) env[k] = v;
  std::string program = resolve_program(argv_in.front(), env);
  if (program.empty()) {
    result.err = "command not found: " + argv_in.front();
    return result;
  }
  auto argv_storage = argv_in;
  auto argv = c_strings(argv_storage);
  auto env_storage = env_strings(env);
  auto envp = c_strings(env_storage);

  int out_pipe[2], err_pipe[2], in_pipe[2] = {-1, -1};
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    result.err = std::strerror(errno);
    return result;
  }
  if (pipe2(err_pipe, O_CLOEXEC) != 0) {
    result.err = std::strerror(errno);
    close(out_pipe[0]);
    close(out_pipe[1]);
    return result;
  }
  if (input && pipe2(in_pipe, O_CLOEXEC) != 0) {
    result.err = std::strerror(errno);
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
    return result;
  }
  pid_t pid = fork();
  if (pid < 0) {
    result.err = std::string("fork: ") + std::strerror(errno);
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1], in_pipe[0], in_pipe[1]}) {
      if (fd >= 0) close(fd);
    }
    return result;
  }
  if (pid == 0) {
    reset_signals();
    if (input) {
      dup2(in_pipe[0], 0);
    } else {
      int devnull = open("/dev/null", O_RDONLY);
      if (devnull >= 0) dup2(devnull, 0);
    }
    dup2(out_pipe[1], 1);
    dup2(err_pipe[1], 2);
    close_fds_except(-1);
    execve(program.c_str(), argv.data(), envp.data());
    _exit(127);
  }
  close(out_pipe[1]);
  close(err_pipe[1]);
  if (input) {
    close(in_pipe[0]);
    const char* data = input->data();
    std::size_t left = input->size();
    while (left > 0) {
      ssize_t w = write(in_pipe[1], data, left);
      if (w < 0) {
        if (errno == EINTR) continue;
        break;
      }
      data += w;
      left -= static_cast<std::size_t>(w);
    }
    close(in_pipe[1]);
  }
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open_count = 2;
  char buf[4096];
  while (open_count > 0) {
    if (poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      ssize_t n = read(fds[i].fd, buf, sizeof buf);
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        close(fds[i].fd);
        fds[i].fd = -1;
        --open_count;
      }
    }
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.exit_code = decode_wait_status(status).shell_code();
  return result;
}

// ---------------------------------------------------------------------------
// ProcessMonitor

struct ProcessMonitor::Impl {
  using Clock = std::chrono::steady_clock;

  struct Entry {
    pid_t pid;
    int pidfd;
    ExitHandler handler;
  };

  mutable std::mutex mu;
  std::vector<Entry> entries;
  std::multimap<Clock::time_point, pid_t> kill_timers;
  int wake_fd = -1;
  bool stop = false;
  std::thread thread;

  void wake() {
    std::uint64_t one = 1;
    ssize_t ignored = write(wake_fd, &one, sizeof one);
    (void)ignored;
  }

  void run() {
    std::vector<pollfd> fds;
    std::vector<pid_t> pids;
    for (;;) {
      int timeout_ms = -1;
      {
        std::lock_guard lk(mu);
        if (stop) return;
        fds.assign(1, pollfd{wake_fd, POLLIN, 0});
        pids.assign(1, 0);
        for (const auto& e : entries) {
          fds.push_back(pollfd{e.pidfd, POLLIN, 0});
          pids.push_back(e.pid);
        }
        if (!kill_timers.empty()) {
          auto dt = kill_timers.begin()->first - Clock::now();
          auto ms = std::chrono::ceil<std::chrono::milliseconds>(dt).count();
          timeout_ms = static_cast<int>(std::max<long long>(0, ms));
        }
      }
      int rc = poll(fds.data(), fds.size(), timeout_ms);
      if (rc < 0 && errno != EINTR) return;
      if (fds[0].revents & POLLIN) {
        std::uint64_t v;
        ssize_t ignored = read(wake_fd, &v, sizeof v);
        (void)ignored;
      }

      std::vector<std::pair<pid_t, ExitInfo>> exited;
      std::vector<ExitHandler> handlers;
      {
        std::lock_guard lk(mu);
        auto now = Clock::now();
        while (!kill_timers.empty() && kill_timers.begin()->first <= now) {
          ::kill(-kill_timers.begin()->second, SIGKILL);
          kill_timers.erase(kill_timers.begin());
        }
        for (std::size_t i = 1; i < fds.size(); ++i) {
          if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
          int status = 0;
          pid_t r = waitpid(pids[i], &status, WNOHANG);
          if (r != pids[i]) continue;
          auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const Entry& e) { return e.pid == pids[i]; });
          if (it == entries.end()) continue;
          close(it->pidfd);
          exited.emplace_back(it->pid, decode_wait_status(status));
          handlers.push_back(std::move(it->handler));
          entries.erase(it);
        }
      }
      for (std::size_t i = 0; i < exited.size(); ++i) {
        if (handlers[i]) handlers[i](exited[i].first, exited[i].second);
      }
    }
  }
};

ProcessMonitor::ProcessMonitor() : impl_(std::make_unique<Impl>()) {
  impl_->wake_fd = eventfd(0, EFD_CLOEXEC | EFD_NONBLOCK);
  if (impl_->wake_fd < 0) throw Error(std::string("eventfd: ") + std::strerror(errno));
  impl_->thread = std::thread([impl = impl_.get()] { impl->run(); });
}

ProcessMonitor::~ProcessMonitor() {
  {
    std::lock_guard lk(impl_->mu);
    impl_->stop = true;
  }
  impl_->wake();
  impl_->thread.join();
  for (auto& e : impl_->entries) {
    ::kill(-e.pid, SIGKILL);
    ::kill(e.pid, SIGKILL);
    int status;
    while (waitpid(e.pid, &status, 0) < 0 && errno == EINTR) {
    }
    close(e.pidfd);
  }
  close(impl_->wake_fd);
}

void ProcessMonitor::watch(pid_t pid, ExitHandler handler) {
  int pidfd = static_cast<int>(syscall(SYS_pidfd_open, pid, 0));
  if (pidfd < 0) throw Error(std::string("pidfd_open: ") + std::strerror(errno));
  fcntl(pidfd, F_SETFD, FD_CLOEXEC);
  {
    std::lock_guard lk(impl_->mu);
    impl_->entries.push_back({pid, pidfd, std::move(handler)});
  }
  impl_->wake();
}

void ProcessMonitor::terminate_group(pid_t pgid, Seconds grace) {
  ::kill(-pgid, SIGTERM);
  {
    std::lock_guard lk(impl_->mu);
    impl_->kill_timers.emplace(
        Impl::Clock::now() + std::chrono::duration_cast<Impl::Clock::duration>(grace), pgid);
  }
  impl_->wake();
}

void ProcessMonitor::kill_group(pid_t pgid) { ::kill(-pgid, SIGKILL); }

std::size_t ProcessMonitor::watched() const {
  std::lock_guard lk(impl_->mu);
  return impl_->entries.size();
}

std::vector<pid_t> child_processes(pid_t parent, bool include_zombies) {
  std::vector<pid_t> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator("/proc", ec)) {
    const auto name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) continue;
    std::ifstream in(entry.path() / "stat");
    std::string line;
    if (!std::getline(in, line)) continue;
    auto close_paren = line.rfind(')');
    if (close_paren == std::string::npos) continue;
    std::istringstream rest(line.substr(close_paren + 1));
    char state = 0;
    pid_t ppid = 0;
    rest >> state >> ppid;
    if (ppid != parent) continue;
    if (!include_zombies && state == 'Z') continue;
    out.push_back(static_cast<pid_t>(std::stoi(name)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace portjob
