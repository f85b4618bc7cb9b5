// Copyright 2026 The medcap Authors.
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

#include "medcap/errors.hpp"

namespace medcap::cli {

/// Process exit code for an error category. 0 is success, 1 an unexpected
/// failure and 2 a command-line usage error.
int exit_code(ErrorCategory category);

/// Entry point of the `medcap` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace medcap::cli
