#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace ddkit {

/// Bad caller input. Carries the index of the offending element when the
/// input was a list.
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what,
                           std::optional<std::size_t> index = std::nullopt)
      : std::invalid_argument(what), index_(index) {}

  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  std::optional<std::size_t> index_;
};

/// A numerical routine exhausted its budget. The partial estimate and its
/// error bound are kept so callers can decide whether to use them.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, double estimate, double error_bound)
      : std::runtime_error(what), estimate_(estimate), error_bound_(error_bound) {}

  double estimate() const noexcept { return estimate_; }
  double error_bound() const noexcept { return error_bound_; }

 private:
  double estimate_;
  double error_bound_;
};

/// Root search found no sign change inside the allowed bracket.
class NotFound : public std::runtime_error {
 public:
  NotFound(const std::string& what, double last_value)
      : std::runtime_error(what), last_value_(last_value) {}

  double last_value() const noexcept { return last_value_; }

 private:
  double last_value_;
};

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddkit
