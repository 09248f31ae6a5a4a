#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace avatar {

/// Base class for every data error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line)
    {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DegenerateFaceError : public Error {
public:
    explicit DegenerateFaceError(std::vector<int> faces);
    const std::vector<int>& faces() const { return faces_; }

private:
    std::vector<int> faces_;
};

class TopologyError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

}  // namespace avatar
