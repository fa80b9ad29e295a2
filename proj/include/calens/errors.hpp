#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace calens {

/// Invalid caller-supplied argument (bad shape, out-of-range parameter).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t row = 0, std::size_t col = 0)
        : std::runtime_error(what), row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

/// Numerical breakdown inside a sampler step (empty categorical, failed factorization...).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what, std::string step = {})
        : std::runtime_error(what), step_(std::move(step)) {}

    const std::string& step() const noexcept { return step_; }

private:
    std::string step_;
};

} // namespace calens
