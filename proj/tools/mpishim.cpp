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

// portjob-mpirun: starts N copies of a program with PORTJOB_RANK and
// PORTJOB_SIZE set, waits for all of them and exits with the first failure.
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Run N ranks of a program", "portjob-mpirun"};
  int n = 1;
  app.add_option("-n,--np", n, "Number of ranks")->required()->check(CLI::Range(1, 4096));
  app.prefix_command();
  CLI11_PARSE(app, argc, argv);
  auto rest = app.remaining();
  if (rest.empty()) {
    std::fprintf(stderr, "portjob-mpirun: no program given\n");
    return 2;
  }

  std::vector<pid_t> ranks;
  for (int r = 0; r < n; ++r) {
    pid_t pid = fork();
    if (pid < 0) {
      std::perror("portjob-mpirun: fork");
      for (pid_t p : ranks) kill(p, SIGKILL);
      return 127;
    }
    if (pid == 0) {
      setenv("PORTJOB_RANK", std::to_string(r).c_str(), 1);
      setenv("PORTJOB_SIZE", std::to_string(n).c_str(), 1);
      std::vector<char*> args;
      for (auto& a : rest) args.push_back(a.data());
      args.push_back(nullptr);
      execvp(args[0], args.data());
      std::fprintf(stderr, "portjob-mpirun: cannot execute '%s': %s\n", args[0], std::strerror(errno));
      _exit(127);
    }
    ranks.push_back(pid);
  }

  int result = 0;
  for (pid_t pid : ranks) {
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    if (result == 0) result = code;
  }
  return result;
}
