// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fedwing {

/// Error raised by any fedwing module. The module tag lets drivers name the
/// component whose invariant failed.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message);

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

[[noreturn]] void fail(const std::string& module, const std::string& message);

}  // namespace fedwing
