#pragma once

#include <stdexcept>
#include <string>

namespace sv {

/* Error taxonomy used across the engine:
 *   ConfigError — malformed configuration or dimension mismatch, caller bug in setup
 *   InputError  — bad runtime data (token out of range, malformed tree, bad file)
 *   LogicError  — internal contract violation, aborting is acceptable
 */
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

struct LogicError : std::logic_error {
    explicit LogicError(const std::string& what) : std::logic_error(what) {}
};

} // namespace sv
