// Copyright 2026 The qrpolicy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QRPOLICY_ERROR_HPP_
#define QRPOLICY_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace qrp {

// Numeric values are shared with the C API status codes.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kDimensionMismatch = 2,
  kNonFinite = 3,
  kIo = 4,
  kConfig = 5,
  kInternal = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& what);

inline void Require(bool condition, ErrorCode code, const char* what) {
  if (!condition) [[unlikely]] Fail(code, what);
}

inline void Require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) [[unlikely]] Fail(code, what);
}

}  // namespace qrp

#endif  // QRPOLICY_ERROR_HPP_
