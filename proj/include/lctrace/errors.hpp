// Copyright 2026 The lctrace Authors
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

namespace lctrace {

/// Base class for all lctrace errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A problem file or manifest could not be parsed. The message names the
/// offending field.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

/// Vector/matrix dimensions do not match the declared problem dimension.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

/// The face-enumeration subproblem solver was handed more linear rows than
/// its configured cap (the enumeration is exponential in m).
class FaceBudgetError : public Error {
 public:
  explicit FaceBudgetError(const std::string& what) : Error(what) {}
};

/// Secular-equation root isolation failed to converge.
class RootFindError : public Error {
 public:
  explicit RootFindError(const std::string& what) : Error(what) {}
};

/// An algorithmic failure inside a solver run (iteration caps inside
/// CONTRACT, subproblem failures, ...).
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(what) {}
};

}  // namespace lctrace
