#pragma once

#include <stdexcept>
#include <string>

namespace sted {

// CLI maps these onto exit codes: usage 2, data format 3, numerical 4.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sted
