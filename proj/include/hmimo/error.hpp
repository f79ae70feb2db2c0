#pragma once

#include <stdexcept>
#include <string>

namespace hmimo {

/// Broad failure classes. The CLI maps each one to a distinct exit code.
enum class ErrorCategory : int {
  kInvalidArgument = 2,
  kNumerical = 3,
  kIo = 4,
  kFormat = 5,
  kDiverged = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCategory::kInvalidArgument, what);
}

}  // namespace hmimo
