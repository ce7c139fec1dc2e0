// Copyright 2026 The redcb Authors.
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

#ifndef REDCB_ERRORS_H_
#define REDCB_ERRORS_H_

#include <stdexcept>
#include <string>

namespace redcb {

// Base class for every error raised by the library. The CLI maps subclasses
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define REDCB_DEFINE_ERROR(Name)         \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

REDCB_DEFINE_ERROR(InvalidInput);
REDCB_DEFINE_ERROR(ShapeError);
REDCB_DEFINE_ERROR(AlignmentError);
REDCB_DEFINE_ERROR(MissingCandidateError);
REDCB_DEFINE_ERROR(MissingRecordError);
REDCB_DEFINE_ERROR(CorruptStoreError);
REDCB_DEFINE_ERROR(UnsupportedVersion);
REDCB_DEFINE_ERROR(ConsistencyError);
REDCB_DEFINE_ERROR(EmptyCandidateSet);
REDCB_DEFINE_ERROR(RangeError);
REDCB_DEFINE_ERROR(IoError);

#undef REDCB_DEFINE_ERROR

// Must be called from inside a catch block. Rethrows the active library
// error as the same type with `context` prepended to its message; other
// exceptions propagate unchanged.
[[noreturn]] inline void RethrowWithContext(const std::string& context) {
  try {
    throw;
  }
#define REDCB_RETHROW(Name) \
  catch (const Name& e) { throw Name(context + e.what()); }
  REDCB_RETHROW(InvalidInput)
  REDCB_RETHROW(ShapeError)
  REDCB_RETHROW(AlignmentError)
  REDCB_RETHROW(MissingCandidateError)
  REDCB_RETHROW(MissingRecordError)
  REDCB_RETHROW(CorruptStoreError)
  REDCB_RETHROW(UnsupportedVersion)
  REDCB_RETHROW(ConsistencyError)
  REDCB_RETHROW(EmptyCandidateSet)
  REDCB_RETHROW(RangeError)
  REDCB_RETHROW(IoError)
#undef REDCB_RETHROW
}

}  // namespace redcb

#endif  // REDCB_ERRORS_H_
