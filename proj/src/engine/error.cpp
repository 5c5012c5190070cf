#include "rectape/error.hpp"

#include <fmt/format.h>

namespace rectape {

ShapeError::ShapeError(std::string op, std::string expected, std::string actual)
    : Error(fmt::format("{}: shape mismatch, expected {}, got {}", op, expected, actual)),
      op_(std::move(op)),
      expected_(std::move(expected)),
      actual_(std::move(actual)) {}

ParseError::ParseError(std::string path, std::size_t line, const std::string& what)
    : Error(fmt::format("{}:{}: {}", path, line, what)), path_(std::move(path)), line_(line) {}

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid configuration:";
  for (const auto& p : problems) {
    out += "\n  - ";
    out += p;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

DivergenceError::DivergenceError(std::size_t epoch, double loss)
    : Error(fmt::format("training diverged at epoch {} (loss = {})", epoch, loss)),
      epoch_(epoch),
      loss_(loss) {}

}  // namespace rectape
