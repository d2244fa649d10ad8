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

#include "portjob/jobspec_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "portjob/error.hpp"

namespace portjob {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) throw ParseError(std::string(where) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError(std::string(where) + ": unknown key '" + key + "'");
  }
}

std::string get_string(const json& v, std::string_view key) {
  if (!v.is_string()) throw ParseError(std::string(key) + ": expected a string");
  return v.get<std::string>();
}

std::optional<std::string> get_opt_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return get_string(*it, key);
}

std::int64_t get_int(const json& v, std::string_view key) {
  if (!v.is_number_integer()) throw ParseError(std::string(key) + ": expected an integer");
  return v.get<std::int64_t>();
}

std::map<std::string, std::string> get_string_map(const json& v, std::string_view key) {
  if (!v.is_object()) throw ParseError(std::string(key) + ": expected an object");
  std::map<std::string, std::string> out;
  for (const auto& [k, val] : v.items()) out[k] = get_string(val, key);
  return out;
}

void put_opt(json& obj, const char* key, const std::optional<std::string>& v) {
  obj[key] = v ? json(*v) : json(nullptr);
}

}  // namespace

JobSpec jobspec_from_json(const json& doc) {
  reject_unknown(doc,
                 {"executable", "arguments", "environment", "directory", "stdin_path",
                  "stdout_path", "stderr_path", "resources", "attributes", "launcher"},
                 "jobspec");
  JobSpec spec;
  if (!doc.contains("executable")) throw ParseError("jobspec: missing 'executable'");
  spec.executable = get_string(doc["executable"], "executable");
  if (auto it = doc.find("arguments"); it != doc.end()) {
    if (!it->is_array()) throw ParseError("arguments: expected an array");
    for (const auto& a : *it) spec.arguments.push_back(get_string(a, "arguments"));
  }
  if (auto it = doc.find("environment"); it != doc.end()) {
    spec.environment = get_string_map(*it, "environment");
  }
  spec.directory = get_opt_string(doc, "directory");
  spec.stdin_path = get_opt_string(doc, "stdin_path");
  spec.stdout_path = get_opt_string(doc, "stdout_path");
  spec.stderr_path = get_opt_string(doc, "stderr_path");

  if (auto it = doc.find("resources"); it != doc.end()) {
    const json& r = *it;
    reject_unknown(r,
                   {"node_count", "processes_per_node", "cpu_cores_per_process",
                    "gpu_cores_per_process", "exclusive"},
                   "resources");
    auto& res = spec.resources;
    if (r.contains("node_count")) res.node_count = get_int(r["node_count"], "node_count");
    if (r.contains("processes_per_node"))
      res.processes_per_node = get_int(r["processes_per_node"], "processes_per_node");
    if (r.contains("cpu_cores_per_process"))
      res.cpu_cores_per_process = get_int(r["cpu_cores_per_process"], "cpu_cores_per_process");
    if (r.contains("gpu_cores_per_process"))
      res.gpu_cores_per_process = get_int(r["gpu_cores_per_process"], "gpu_cores_per_process");
    if (r.contains("exclusive")) {
      if (!r["exclusive"].is_boolean()) throw ParseError("exclusive: expected a boolean");
      res.exclusive = r["exclusive"].get<bool>();
    }
  }

  if (auto it = doc.find("attributes"); it != doc.end()) {
    const json& a = *it;
    reject_unknown(a, {"wall_time_s", "queue_name", "account", "custom"}, "attributes");
    auto& attrs = spec.attributes;
    if (a.contains("wall_time_s"))
      attrs.wall_time = std::chrono::seconds(get_int(a["wall_time_s"], "wall_time_s"));
    attrs.queue_name = get_opt_string(a, "queue_name");
    attrs.account = get_opt_string(a, "account");
    if (a.contains("custom")) attrs.custom = get_string_map(a["custom"], "custom");
  }

  if (auto it = doc.find("launcher"); it != doc.end()) {
    auto name = get_string(*it, "launcher");
    auto launcher = parse_launcher(name);
    if (!launcher) throw ParseError("launcher: unknown launcher '" + name + "'");
    spec.launcher = *launcher;
  }
  return spec;
}

json jobspec_to_json(const JobSpec& spec) {
  json doc;
  doc["executable"] = spec.executable;
  doc["arguments"] = spec.arguments;
  doc["environment"] = spec.environment;
  put_opt(doc, "directory", spec.directory);
  put_opt(doc, "stdin_path", spec.stdin_path);
  put_opt(doc, "stdout_path", spec.stdout_path);
  put_opt(doc, "stderr_path", spec.stderr_path);
  const auto& r = spec.resources;
  doc["resources"] = {{"node_count", r.node_count},
                      {"processes_per_node", r.processes_per_node},
                      {"cpu_cores_per_process", r.cpu_cores_per_process},
                      {"gpu_cores_per_process", r.gpu_cores_per_process},
                      {"exclusive", r.exclusive}};
  json attrs;
  attrs["wall_time_s"] = spec.attributes.wall_time.count();
  put_opt(attrs, "queue_name", spec.attributes.queue_name);
  put_opt(attrs, "account", spec.attributes.account);
  attrs["custom"] = spec.attributes.custom;
  doc["attributes"] = std::move(attrs);
  doc["launcher"] = std::string(to_string(spec.launcher));
  return doc;
}

JobSpec parse_jobspec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("jobspec: ") + e.what());
  }
  return jobspec_from_json(doc);
}

JobSpec load_jobspec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open jobspec file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jobspec(buf.str());
}

std::string dump_jobspec(const JobSpec& spec) { return jobspec_to_json(spec).dump(2) + "\n"; }

}  // namespace portjob
