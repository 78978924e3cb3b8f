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

#pragma once

#include <stdexcept>
#include <string>

namespace dmoe {

// Base of every error thrown by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (counts, rates, incompatible options).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dimension / length mismatches between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Signal shorter than one analysis frame.
class TooShortError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Unreadable, truncated or version-mismatched files.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmoe
