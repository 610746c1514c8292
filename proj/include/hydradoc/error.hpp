#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydradoc {

// Base of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up (tensor ops, masks, feature matrices).
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A label has no positive or no negative examples, so its class weights are undefined.
class DegenerateClassError : public Error {
 public:
  explicit DegenerateClassError(std::string label)
      : Error("degenerate class '" + label + "': needs at least one positive and one negative example"),
        label_(std::move(label)) {}
  const std::string& label() const noexcept { return label_; }

 private:
  std::string label_;
};

// Embedding backend failure; carries the block indices that could not be embedded.
class EmbeddingError : public Error {
 public:
  EmbeddingError(const std::string& what, std::vector<std::size_t> failed_blocks = {})
      : Error(what), failed_blocks_(std::move(failed_blocks)) {}
  const std::vector<std::size_t>& failed_blocks() const noexcept { return failed_blocks_; }

 private:
  std::vector<std::size_t> failed_blocks_;
};

class DimensionMismatchError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

// Model / cache file problems.
class FormatError : public Error {
 public:
  using Error::Error;
};
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};
class CorruptError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Malformed dataset record; line is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hydradoc
