#pragma once

#include <stdexcept>
#include <string>

namespace afcsim {

/// Input that violates a documented precondition or invariant of a physical
/// model (undersampled chirp, unresolvable comb, step-size violation, ...).
class PhysicsError : public std::invalid_argument
{
public:
    explicit PhysicsError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or schema-violating configuration text.
class ConfigError : public std::runtime_error
{
public:
    ConfigError(const std::string& what, int line = 0)
        : std::runtime_error(what), m_line(line)
    {
    }

    int line() const { return m_line; }

private:
    int m_line;
};

} // namespace afcsim
