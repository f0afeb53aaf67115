#pragma once

#include <stdexcept>
#include <string>

namespace memrecall {

// The CLI maps these onto exit codes 1, 2 and 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace memrecall
