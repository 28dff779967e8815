#pragma once

#include <stdexcept>
#include <string>

namespace stanceshift {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; the message names the offending line or field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Data that parsed but violates an invariant (duplicate id, unknown category, bad range).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class LanguageUnavailableError : public Error {
 public:
  LanguageUnavailableError(std::string question_id, std::string language)
      : Error("question '" + question_id + "' has no text for language '" + language + "'"),
        question_id_(std::move(question_id)),
        language_(std::move(language)) {}

  const std::string& question_id() const noexcept { return question_id_; }
  const std::string& language() const noexcept { return language_; }

 private:
  std::string question_id_;
  std::string language_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Retries exhausted or a non-retryable transport failure.
class BackendUnavailableError : public Error {
 public:
  BackendUnavailableError(const std::string& message, int last_status)
      : Error(message), last_status_(last_status) {}

  /// HTTP status of the final attempt; 0 when the transport itself failed.
  int last_status() const noexcept { return last_status_; }

 private:
  int last_status_;
};

class EmptyReplyError : public Error {
 public:
  using Error::Error;
};

class UnparseableScoreError : public Error {
 public:
  using Error::Error;
};

class OutOfRangeScoreError : public Error {
 public:
  OutOfRangeScoreError(const std::string& message, double value) : Error(message), value_(value) {}
  double value() const noexcept { return value_; }

 private:
  double value_;
};

class AllRefusedError : public Error {
 public:
  explicit AllRefusedError(const std::string& question_id)
      : Error("every probe of question '" + question_id + "' was refused"), question_id_(question_id) {}
  const std::string& question_id() const noexcept { return question_id_; }

 private:
  std::string question_id_;
};

class MissingParaphraseError : public Error {
 public:
  using Error::Error;
};

/// The judge refused to give a score before or after the debate.
class DebateAbortedError : public Error {
 public:
  using Error::Error;
};

class DebateSetFailedError : public Error {
 public:
  using Error::Error;
};

class AggregationError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

// Annotation protocol errors.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class SequenceError : public Error {
 public:
  using Error::Error;
};

class ImmutabilityError : public Error {
 public:
  using Error::Error;
};

class ExportError : public Error {
 public:
  using Error::Error;
};

}  // namespace stanceshift
