#pragma once

#include <stdexcept>
#include <string>

namespace mars {

// Every failure the library reports derives from Error. The CLI maps
// UsageError to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Bad arguments to a numeric op or model component (shape mismatch,
// out-of-range index, empty input).
class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Text pipeline failed as a whole (e.g. every token filtered out).
class PipelineError : public Error {
 public:
  using Error::Error;
};

class DocumentRejected : public Error {
 public:
  DocumentRejected(std::string item_id, const std::string& why)
      : Error("document rejected for item '" + item_id + "': " + why),
        item_id_(std::move(item_id)) {}
  const std::string& item_id() const noexcept { return item_id_; }

 private:
  std::string item_id_;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class ColdUserError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class CompatibilityError : public Error {
 public:
  using Error::Error;
};

class ComparisonError : public Error {
 public:
  using Error::Error;
};

}  // namespace mars
