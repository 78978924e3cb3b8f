// Copyright 2026 The dmoe Authors.
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

#include "dmoe/parallel.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

#include "dmoe/error.hpp"

namespace dmoe {

int configure_threads() {
  if (const char* env = std::getenv("DMOE_THREADS"); env != nullptr && *env != '\0') {
    int n = 0;
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("DMOE_THREADS is not an integer: ") + env);
    }
    if (n < 1) throw ConfigError("DMOE_THREADS must be >= 1");
    omp_set_num_threads(n);
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace dmoe
