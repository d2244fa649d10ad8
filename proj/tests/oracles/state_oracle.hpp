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

// Reference lifecycle, written out as a matrix rather than an edge list.
// Rows are "from", columns are "to", both in NEW..CANCELED order.

#include <array>

namespace oracle {

inline constexpr std::array<std::array<bool, 6>, 6> kLegal{{
    //        NEW    QUEUED ACTIVE COMPL  FAILED CANCEL
    /*NEW*/ {{false, true, false, false, true, false}},
    /*QUE*/ {{false, false, true, false, true, true}},
    /*ACT*/ {{false, false, false, true, true, true}},
    /*COM*/ {{false, false, false, false, false, false}},
    /*FAI*/ {{false, false, false, false, false, false}},
    /*CAN*/ {{false, false, false, false, false, false}},
}};

inline bool legal(int from, int to) {
  return kLegal[static_cast<std::size_t>(from)][static_cast<std::size_t>(to)];
}

inline bool terminal(int s) { return s >= 3; }

}  // namespace oracle
