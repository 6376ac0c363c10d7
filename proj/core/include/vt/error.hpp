#pragma once

#include <stdexcept>
#include <string>

namespace vt {

enum class ErrorKind {
  invalid_table,
  unknown_tokenizer,
  unknown_benchmark,
  missing_table,
  unparseable,
  schema_mismatch,
  sample_too_large,
  empty_verdicts,
  judge_unavailable,
  config,
  io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vt
