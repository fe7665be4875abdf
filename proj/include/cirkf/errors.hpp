#pragma once

#include <stdexcept>
#include <string>

namespace cirkf {

/// Invalid argument or parameter outside the model's domain.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that cannot support the requested computation
/// (too short, constant, single-class, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine hit a singular or non-finite state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace cirkf
