/* Copyright 2026 The Calico Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace calico {

// Base for every error raised by the library. The CLI maps these to a
// structured message and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t position, const std::string& what)
      : Error("SyntaxError",
              what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

#define CALICO_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  };

CALICO_DEFINE_ERROR(ArityError)
CALICO_DEFINE_ERROR(UnknownSymbol)
CALICO_DEFINE_ERROR(InvalidProgram)
CALICO_DEFINE_ERROR(NotRemovable)
CALICO_DEFINE_ERROR(IoError)
CALICO_DEFINE_ERROR(SchemaError)
CALICO_DEFINE_ERROR(ShapeError)
CALICO_DEFINE_ERROR(ZeroVector)
CALICO_DEFINE_ERROR(EmptyCandidates)
CALICO_DEFINE_ERROR(UnknownAnswer)
CALICO_DEFINE_ERROR(ConfigError)

#undef CALICO_DEFINE_ERROR

}  // namespace calico
