// Copyright 2026 The attnfilter Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
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

namespace attn {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed configuration or input data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Floating-point failure that cannot happen for valid parameters
// (e.g. a marginal likelihood underflowing even in log space).
class NumericError : public Error {
 public:
  using Error::Error;
};

// A latent component lost all of its posterior mass.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Newton iteration for the Beta moment equations failed to converge.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double alpha, double beta,
              double residual_log_eta, double residual_log_1m_eta)
      : Error(what),
        alpha(alpha),
        beta(beta),
        residual_log_eta(residual_log_eta),
        residual_log_1m_eta(residual_log_1m_eta) {}

  double alpha;
  double beta;
  double residual_log_eta;
  double residual_log_1m_eta;
};

// Records reference users that have no filter decision.
class OrphanUsersError : public ValidationError {
 public:
  OrphanUsersError(const std::string& what, std::vector<std::string> users)
      : ValidationError(what), user_ids(std::move(users)) {}

  std::vector<std::string> user_ids;
};

}  // namespace attn
