// Copyright 2026 The rprobe Authors.
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

#ifndef RPROBE_ERRORS_H_
#define RPROBE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace rprobe {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (e.g. empty softmax).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Unknown identifier or out-of-range index.
class LookupError : public Error {
 public:
  using Error::Error;
};

// File system failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// User-supplied data or configuration failed validation. The CLI maps this
// family to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CompatibilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Embedding bank validation failures.
class BadMagicError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class VersionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class HeaderMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class PayloadLengthError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonFiniteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Corpus / clustering validation failure.
class CorpusError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Requested analysis data is absent (e.g. alphas from a mean run).
class MissingDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rprobe

#endif  // RPROBE_ERRORS_H_
