#pragma once

#include <stdexcept>
#include <string>

namespace geoforge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file; message carries "<file>:<line>:" context.
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input violating a semantic rule (dangling id, duplicate id, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

class QueueError : public Error {
public:
    using Error::Error;
};

class CompareError : public Error {
public:
    using Error::Error;
};

class ExecError : public Error {
public:
    using Error::Error;
};

} // namespace geoforge
