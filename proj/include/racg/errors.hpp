#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace racg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}
  std::size_t line_no() const noexcept { return line_no_; }

 private:
  std::size_t line_no_;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(const std::string& id) : Error("duplicate id: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class EmptySelection : public Error {
 public:
  using Error::Error;
};

class UnknownDoc : public Error {
 public:
  explicit UnknownDoc(const std::string& doc_id) : Error("unknown doc_id: " + doc_id) {}
};

class MissingGolden : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Transport or protocol failure talking to an external service.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  /// HTTP status, or 0 when no response was received.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class EmbeddingServiceError : public ServiceError {
 public:
  using ServiceError::ServiceError;
};

class GenerationServiceError : public ServiceError {
 public:
  using ServiceError::ServiceError;
};

class GenerationTimeout : public GenerationServiceError {
 public:
  explicit GenerationTimeout(const std::string& what) : GenerationServiceError(0, what) {}
};

class EmptyResponse : public Error {
 public:
  EmptyResponse() : Error("model response is empty") {}
};

class SandboxUnavailable : public Error {
 public:
  using Error::Error;
};

class MissingBaseline : public Error {
 public:
  using Error::Error;
};

class TaskSetMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace racg
