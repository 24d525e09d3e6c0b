#pragma once

#include <stdexcept>
#include <string>

namespace mstage {

/// Base error for all pipeline failures. Carries the name of the stage that
/// raised it so the CLI can emit a stage-tagged diagnostic.
class Error : public std::runtime_error {
 public:
  Error(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Malformed input record. `record` is the 1-based line (or array index) of
/// the offending record.
class FormatError : public Error {
 public:
  FormatError(std::string stage, std::size_t record, const std::string& what)
      : Error(std::move(stage), "record " + std::to_string(record) + ": " + what),
        record_(record) {}

  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mstage
