#pragma once

#include <stdexcept>
#include <string>

namespace mtpv {

// Base of every error thrown by the library. Subclasses name the contract
// that was broken so callers (and the CLI exit-code mapping) can tell them
// apart without parsing messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { public: using Error::Error; };
class ParameterError : public Error { public: using Error::Error; };
class CapacityError : public Error { public: using Error::Error; };
class InputError : public Error { public: using Error::Error; };
class ContractError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class SamplingError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class ArtifactError : public Error { public: using Error::Error; };

// Raised when training produces a non-finite loss; carries where it happened.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t step, std::size_t batch_id, const std::string& detail);
  std::size_t step() const noexcept { return step_; }
  std::size_t batch_id() const noexcept { return batch_id_; }

 private:
  std::size_t step_;
  std::size_t batch_id_;
};

}  // namespace mtpv
