#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace excel {

// Base of every error the library raises for bad input or bad files.
// Anything else escaping the library is an internal fault.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class MalformedFile : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NonFiniteValue : public Error {
public:
    NonFiniteValue(std::size_t row, std::size_t col)
        : Error("non-finite value at row " + std::to_string(row) + ", col " + std::to_string(col)),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class LabelOutOfRange : public Error {
public:
    LabelOutOfRange(std::size_t index, long long value)
        : Error("label " + std::to_string(value) + " out of range at index " + std::to_string(index)),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class EmptyPayload : public Error {
public:
    using Error::Error;
};

class VersionMismatch : public Error {
public:
    using Error::Error;
};

class ChecksumMismatch : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class MissingContext : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class EmptyBatch : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace excel
