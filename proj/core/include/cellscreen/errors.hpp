#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cellscreen {

/// Bad command-line usage or an invalid configuration value.
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed log or document; carries the first offending row when known.
class format_error : public std::runtime_error {
 public:
  static constexpr std::size_t no_row = static_cast<std::size_t>(-1);

  explicit format_error(const std::string& message, std::size_t row = no_row)
      : std::runtime_error(row == no_row ? message
                                         : "row " + std::to_string(row) + ": " + message),
        row_(row) {}

  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Non-finite or otherwise unusable numeric input.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too few data points for the requested estimate.
class insufficient_data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regression input with no usable design (e.g. all abscissae identical).
class degenerate_fit_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A voltage window that the supplied log never crosses.
class window_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cellscreen
