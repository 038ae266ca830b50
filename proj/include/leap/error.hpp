#pragma once

#include <stdexcept>
#include <string>

namespace leap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A distribution (or likelihood product) with no probability mass.
class ZeroMassError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value outside its admissible range. The message names the field.
class ParameterError : public Error {
public:
    using Error::Error;
};

class TaxonomyError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file content.
class FormatError : public Error {
public:
    using Error::Error;
};

class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

}  // namespace leap
