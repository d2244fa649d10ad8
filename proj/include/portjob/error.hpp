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

#include <stdexcept>
#include <string>
#include <vector>

namespace portjob {

// Base of every error the library raises. Each subclass corresponds to one
// failure kind callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSpec : public Error {
 public:
  explicit InvalidSpec(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Malformed JobSpec / dialect / state documents.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IllegalTransition : public Error {
 public:
  using Error::Error;
};

class DuplicateName : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class UnknownJob : public Error {
 public:
  using Error::Error;
};

class UnknownNativeId : public Error {
 public:
  using Error::Error;
};

class Timeout : public Error {
 public:
  using Error::Error;
};

class UnknownLauncher : public Error {
 public:
  using Error::Error;
};

class SubmitFailed : public Error {
 public:
  using Error::Error;
};

class UnsupportedAttribute : public Error {
 public:
  using Error::Error;
};

class IdParseError : public Error {
 public:
  using Error::Error;
};

class StatusCommandFailed : public Error {
 public:
  using Error::Error;
};

class OversizedTask : public Error {
 public:
  using Error::Error;
};

class InsufficientFreeNodes : public Error {
 public:
  using Error::Error;
};

class AgentStartFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace portjob
