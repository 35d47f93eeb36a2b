#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hpn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input, optionally tagged with the 1-based line it came from.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A face references a vertex that does not exist.
class IndexError : public Error {
public:
    IndexError(const std::string& what, std::size_t face)
        : Error(what), face_(face) {}
    std::size_t face() const noexcept { return face_; }

private:
    std::size_t face_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Binary container problems: bad magic, version mismatch, checksum failure.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (degenerate input, solver non-convergence).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Broken links between hierarchy levels or mismatched table sizes.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied arguments outside their documented domain.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A level-aware edit was requested on a hierarchy whose upper levels are stale.
class StaleHierarchyError : public Error {
public:
    using Error::Error;
};

}  // namespace hpn
