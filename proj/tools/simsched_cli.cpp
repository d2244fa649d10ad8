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

#include "simsched_cli.hpp"

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "portjob/error.hpp"
#include "portjob/simsched_store.hpp"

namespace portjob::simsched::cli {

namespace {

std::filesystem::path state_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("SIMSCHED_DIR");
  if (!env || !*env) throw Error("SIMSCHED_DIR is not set");
  return env;
}

int parse_and_run(CLI::App& app, const std::vector<std::string>& args,
                  const std::function<int()>& body) {
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << app.get_name() << ": " << e.what() << "\n";
    return 1;
  }
}

std::optional<JobId> parse_id(const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    return std::nullopt;
  }
  try {
    return std::stoll(text);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

int ssim_main(const std::vector<std::string>& args) {
  CLI::App app{"Simulated batch scheduler control", "ssim"};
  app.require_subcommand(1);
  std::string dir;
  app.add_option("--dir", dir, "State directory (default: $SIMSCHED_DIR)");

  StoreConfig config;
  bool stepped = false;
  double timescale = config.timescale;
  auto* init = app.add_subcommand("init", "Create or reset a simulated cluster");
  init->add_option("--nodes", config.nodes, "Number of nodes")->required();
  init->add_option("--cores", config.cores_per_node, "Cores per node");
  init->add_flag("--backfill", config.backfill, "Enable EASY backfill");
  auto* ts = init->add_option("--timescale", timescale,
                              "Wall seconds per virtual second (real-time clock)");
  init->add_flag("--stepped", stepped, "Advance the clock only on 'tick'")->excludes(ts);

  double seconds = 0;
  auto* tick = app.add_subcommand("tick", "Advance a stepped clock");
  tick->add_option("seconds", seconds, "Virtual seconds")->required();

  auto* show = app.add_subcommand("show", "Print the cluster state");

  return parse_and_run(app, args, [&] {
    auto path = state_dir(dir);
    if (*init) {
      config.stepped = stepped;
      config.timescale = timescale;
      SimStore::init(path, config);
      return 0;
    }
    SimStore store(path);
    if (*tick) {
      store.tick(seconds);
    } else if (*show) {
      const auto& c = store.cluster();
      std::cout << "nodes=" << c.total_nodes << " cores=" << c.node_cores
                << " backfill=" << (c.backfill ? 1 : 0) << " now=" << c.now
                << " free=" << c.free_nodes() << "\n";
      for (const auto& j : c.running) std::cout << j.id << "|RUN nodes=" << j.nodes << "\n";
      for (const auto& j : c.pending) std::cout << j.id << "|PEND nodes=" << j.nodes << "\n";
    }
    return 0;
  });
}

int ssub_main(const std::vector<std::string>& args) {
  CLI::App app{"Submit a script to the simulated scheduler", "ssub"};
  std::string dir, script;
  app.add_option("--dir", dir, "State directory (default: $SIMSCHED_DIR)");
  app.add_option("script", script, "Job script with #SSUB directives")->required();
  return parse_and_run(app, args, [&] {
    SimStore store(state_dir(dir));
    std::cout << store.submit_script(script) << "\n";
    return 0;
  });
}

int sstat_main(const std::vector<std::string>& args) {
  CLI::App app{"Query job states of the simulated scheduler", "sstat"};
  std::string dir;
  std::vector<std::string> ids;
  app.add_option("--dir", dir, "State directory (default: $SIMSCHED_DIR)");
  app.add_option("ids", ids, "Job ids (default: all active jobs)");
  return parse_and_run(app, args, [&] {
    SimStore store(state_dir(dir));
    if (ids.empty()) {
      for (auto id : store.active_ids()) ids.push_back(std::to_string(id));
    }
    for (const auto& text : ids) {
      auto id = parse_id(text);
      auto token = id ? store.status(*id) : std::nullopt;
      std::cout << text << "|" << (token ? to_string(*token) : "UNKNOWN") << "\n";
    }
    return 0;
  });
}

int sscancel_main(const std::vector<std::string>& args) {
  CLI::App app{"Cancel a job of the simulated scheduler", "sscancel"};
  std::string dir, id_text;
  app.add_option("--dir", dir, "State directory (default: $SIMSCHED_DIR)");
  app.add_option("id", id_text, "Job id")->required();
  return parse_and_run(app, args, [&] {
    SimStore store(state_dir(dir));
    auto id = parse_id(id_text);
    if (!id || !store.cancel(*id)) {
      std::cerr << "sscancel: unknown job " << id_text << "\n";
      return 1;
    }
    return 0;
  });
}

int stick_main(const std::vector<std::string>& args) {
  std::vector<std::string> forwarded{"tick"};
  forwarded.insert(forwarded.end(), args.begin(), args.end());
  return ssim_main(forwarded);
}

}  // namespace portjob::simsched::cli
