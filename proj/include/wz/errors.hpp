#pragma once

#include <stdexcept>
#include <string>

namespace wz {

/// Unknown catalog key (field name, integrator kind, ...).
struct lookup_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A capability the operation needs (exact flow, splitting, ...) is absent.
struct capability_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A requested accuracy could not be reached within the iteration cap.
struct accuracy_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Too few usable data points for a fit.
struct insufficient_data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace wz
