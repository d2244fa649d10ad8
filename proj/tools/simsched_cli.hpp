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

#include <string>
#include <vector>

// Entry points of the simulated-scheduler tools (args exclude the program
// name). The state directory comes from --dir or SIMSCHED_DIR.
namespace portjob::simsched::cli {

int ssim_main(const std::vector<std::string>& args);
int ssub_main(const std::vector<std::string>& args);
int sstat_main(const std::vector<std::string>& args);
int sscancel_main(const std::vector<std::string>& args);
int stick_main(const std::vector<std::string>& args);

}  // namespace portjob::simsched::cli
