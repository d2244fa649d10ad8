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

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "portjob/job.hpp"

namespace portjob {

// Strict JobSpec document codec. Unknown keys, wrong types and unknown
// launcher names raise ParseError. Missing keys take JobSpec defaults
// except `executable`, which is required.
JobSpec jobspec_from_json(const nlohmann::json& doc);
nlohmann::json jobspec_to_json(const JobSpec& spec);

JobSpec parse_jobspec(std::string_view text);
JobSpec load_jobspec(const std::filesystem::path& path);
std::string dump_jobspec(const JobSpec& spec);

}  // namespace portjob
