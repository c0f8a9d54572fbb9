/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cassert>
#include <string>
#include <string_view>
#include <utility>

namespace weakkv {

enum class Code : int {
  kOk = 0,
  kInvalidArgument,
  kOutOfRange,
  kNotFound,
  kCorruption,
  kIOError,
  kDeviceFull,
  // Lock acquisition failed under the no-wait policy; the transaction has
  // already been rolled back. Retryable.
  kTxnConflict,
  // Skip-list arena or overlay capacity exhausted; issue a persist and
  // retry the transaction. Retryable.
  kPersistRequired,
  kTooLarge,
  kInvalidState,
};

const char* code_name(Code c);

class Status {
 public:
  Status() : code_(Code::kOk) {}
  static Status ok() { return Status(); }
  static Status error(Code c, std::string msg) { return Status(c, std::move(msg)); }

  bool is_ok() const { return code_ == Code::kOk; }
  Code code() const { return code_; }
  const std::string& message() const { return msg_; }
  bool retryable() const {
    return code_ == Code::kTxnConflict || code_ == Code::kPersistRequired;
  }
  std::string to_string() const;

 private:
  Status(Code c, std::string msg) : code_(c), msg_(std::move(msg)) {}
  Code code_;
  std::string msg_;
};

// Minimal value-or-status. The stored value is only accessible when ok().
template <typename T>
class Result {
 public:
  Result(T v) : value_(std::move(v)) {}                  // NOLINT(google-explicit-constructor)
  Result(Status s) : status_(std::move(s)) { assert(!status_.is_ok()); }  // NOLINT

  bool is_ok() const { return status_.is_ok(); }
  const Status& status() const { return status_; }
  Code code() const { return status_.code(); }

  T& value() {
    assert(is_ok());
    return value_;
  }
  const T& value() const {
    assert(is_ok());
    return value_;
  }
  T take() {
    assert(is_ok());
    return std::move(value_);
  }

 private:
  T value_{};
  Status status_{};
};

}  // namespace weakkv
