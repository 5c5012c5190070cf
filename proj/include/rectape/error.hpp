#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rectape {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation received tensors whose shapes do not satisfy its shape rule.
class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::string expected, std::string actual);

  const std::string& op() const { return op_; }
  const std::string& expected() const { return expected_; }
  const std::string& actual() const { return actual_; }

 private:
  std::string op_;
  std::string expected_;
  std::string actual_;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what);

  std::size_t line() const { return line_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// Configuration or request that is invalid before any compute happens.
/// Holds every problem found, not only the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems);
  explicit ValidationError(const std::string& problem)
      : ValidationError(std::vector<std::string>{problem}) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, double loss);

  std::size_t epoch() const { return epoch_; }
  double loss() const { return loss_; }

 private:
  std::size_t epoch_;
  double loss_;
};

}  // namespace rectape
