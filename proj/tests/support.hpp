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

#pragma once

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include "portjob/batch.hpp"
#include "portjob/simsched_store.hpp"

namespace support {

namespace fs = std::filesystem;

// Removed with its contents on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("portjob-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline fs::path tool(const std::string& name) { return fs::path(PORTJOB_TOOLS_DIR) / name; }
inline fs::path source_dir() { return fs::path(PORTJOB_SOURCE_DIR); }

// The shipped simsched dialect with its commands pointed at the built tools.
inline portjob::QueueAdapterDescriptor simsched_dialect(double poll_s = 0.2) {
  auto d = portjob::load_dialect(source_dir() / "dialects" / "simsched.json");
  for (auto* argv : {&d.submit_argv, &d.status_argv, &d.cancel_argv}) {
    (*argv)[0] = tool((*argv)[0]).string();
  }
  d.poll_interval = std::chrono::duration<double>(poll_s);
  return d;
}

// A fresh simulated cluster plus batch options that talk to it.
struct SimCluster {
  TempDir state{"sim"};
  TempDir work{"work"};

  explicit SimCluster(portjob::simsched::StoreConfig config = {}) {
    portjob::simsched::SimStore::init(state.path(), config);
  }

  portjob::BatchOptions options(double poll_s = 0.2) const {
    portjob::BatchOptions o;
    o.adapter = simsched_dialect(poll_s);
    o.work_dir = work.path();
    o.command_env["SIMSCHED_DIR"] = state.path().string();
    return o;
  }
};

// Backend config for reaching `cluster` through the batch adapter.
inline nlohmann::json simsched_via(const SimCluster& cluster, double poll_s = 0.1) {
  nlohmann::json via;
  via["dialect"] = nlohmann::json::parse(slurp(source_dir() / "dialects" / "simsched.json"));
  via["dialect"]["submit_argv"] = {tool("ssub").string()};
  via["dialect"]["status_argv"] = {tool("sstat").string()};
  via["dialect"]["cancel_argv"] = {tool("sscancel").string()};
  via["dialect"]["poll_interval_s"] = poll_s;
  via["work_dir"] = cluster.work.path().string();
  via["command_env"]["SIMSCHED_DIR"] = cluster.state.path().string();
  return via;
}

template <class Pred>
bool eventually(Pred pred, std::chrono::milliseconds limit = std::chrono::seconds(10)) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return pred();
}

}  // namespace support
