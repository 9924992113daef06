#pragma once

#include <stdexcept>
#include <string>

namespace uwbcal {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input/file problems (CLI exit code 2).
class ParseError : public Error {
public:
    using Error::Error;
};

// Numerical failures (CLI exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

struct NonUniformKnots : Error {
    explicit NonUniformKnots(const std::string& msg) : Error(msg) {}
};
struct TooFewControlPoses : Error {
    explicit TooFewControlPoses(const std::string& msg) : Error(msg) {}
};
struct OutOfDomain : Error {
    explicit OutOfDomain(const std::string& msg) : Error(msg) {}
};
struct NonMonotoneTimestamps : Error {
    explicit NonMonotoneTimestamps(const std::string& msg) : Error(msg) {}
};
struct DegenerateSystem : NumericalError {
    explicit DegenerateSystem(const std::string& msg) : NumericalError(msg) {}
};
struct NotPositiveDefinite : NumericalError {
    explicit NotPositiveDefinite(const std::string& msg) : NumericalError(msg) {}
};
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};
struct EmptyInput : Error {
    explicit EmptyInput(const std::string& msg) : Error(msg) {}
};
struct DegenerateBox : Error {
    explicit DegenerateBox(const std::string& msg) : Error(msg) {}
};
struct TooFewSamples : Error {
    explicit TooFewSamples(const std::string& msg) : Error(msg) {}
};
struct DegenerateGeometry : NumericalError {
    explicit DegenerateGeometry(const std::string& msg) : NumericalError(msg) {}
};
struct NonConvergence : NumericalError {
    explicit NonConvergence(const std::string& msg) : NumericalError(msg) {}
};
struct EmptyAnchors : Error {
    explicit EmptyAnchors(const std::string& msg) : Error(msg) {}
};
struct UnknownAnchorId : Error {
    explicit UnknownAnchorId(const std::string& msg) : Error(msg) {}
};
struct MissingTruth : Error {
    explicit MissingTruth(const std::string& msg) : Error(msg) {}
};

}  // namespace uwbcal
