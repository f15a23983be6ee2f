#pragma once
#include <stdexcept>
#include <string>

namespace mthal {

// Exit-code classes used by the CLI: usage = 1, data = 2, numerical = 3.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mthal
