#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qbsde {

/// Base of every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class invalid_parameter : public error {
public:
    using error::error;
};

class budget_exceeded : public error {
public:
    budget_exceeded(const std::string& what, double node_count)
        : error(what), node_count_(node_count) {}
    double node_count() const noexcept { return node_count_; }

private:
    double node_count_;
};

class step_mismatch : public error {
public:
    using error::error;
};

/// A formula was evaluated outside the domain where it is defined.
class domain_error : public error {
public:
    using error::error;
};

/// A derived constant (reverse Hoelder C_p and friends) has a non-positive
/// denominator for the requested exponent.
class infeasible_constant : public error {
public:
    using error::error;
};

class divergence_error : public error {
public:
    using error::error;
};

class growth_violation : public error {
public:
    using error::error;
};

class insufficient_data : public error {
public:
    using error::error;
};

class parse_error : public error {
public:
    enum class kind { syntax, unknown_identifier, arity, type };

    parse_error(kind k, std::size_t position, const std::string& message,
                std::vector<std::string> expected = {})
        : error(message + " at position " + std::to_string(position)),
          kind_(k), position_(position), expected_(std::move(expected)) {}

    kind error_kind() const noexcept { return kind_; }
    std::size_t position() const noexcept { return position_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    kind kind_;
    std::size_t position_;
    std::vector<std::string> expected_;
};

class eval_error : public error {
public:
    using error::error;
};

class config_error : public error {
public:
    using error::error;
};

}  // namespace qbsde
