#pragma once

#include <stdexcept>
#include <string>

namespace irsce {

// Error taxonomy used for CLI exit codes: configuration problems exit 2,
// I/O problems exit 3, numeric failures exit 4. Precondition violations on
// library operations throw std::invalid_argument and map to exit 2.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Requested dataset would not fit under the configured size cap; raised
// before any sample storage is allocated.
class DatasetTooLargeError : public ConfigError {
public:
    explicit DatasetTooLargeError(const std::string& what) : ConfigError(what) {}
};

// A link-noise operation received a zero-norm signal with finite SNR, so no
// noise variance satisfies the SNR definition.
class DegenerateSignalError : public NumericError {
public:
    explicit DegenerateSignalError(const std::string& what) : NumericError(what) {}
};

// Metric is undefined for the given inputs (e.g. zero-energy ground truth).
class UndefinedMetricError : public NumericError {
public:
    explicit UndefinedMetricError(const std::string& what) : NumericError(what) {}
};

} // namespace irsce
