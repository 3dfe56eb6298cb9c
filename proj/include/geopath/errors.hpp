/*
 * Copyright 2026 The geopath Authors
 *
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

#include <stdexcept>
#include <string>

namespace geopath {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class SimulationDiverged : public Error {
 public:
  SimulationDiverged(long step, const std::string& what)
      : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Raised when a linear system stays indefinite after the jitter ladder, or
/// when a sample set is degenerate in some dimension.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  DegeneracyError(double ess, const std::string& what)
      : Error(what), ess_(ess) {}
  double effective_sample_size() const noexcept { return ess_; }

 private:
  double ess_;
};

class BridgeQualityError : public Error {
 public:
  BridgeQualityError(double miss_rate, const std::string& what)
      : Error(what), miss_rate_(miss_rate) {}
  double miss_rate() const noexcept { return miss_rate_; }

 private:
  double miss_rate_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UndefinedPhase : public Error {
 public:
  using Error::Error;
};

class InfeasibleReference : public Error {
 public:
  InfeasibleReference(double acceptance, const std::string& what)
      : Error(what), acceptance_(acceptance) {}
  double acceptance_rate() const noexcept { return acceptance_; }

 private:
  double acceptance_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace geopath
