// Error taxonomy shared by the library and the CLI exit-code mapping.
#pragma once

#include <stdexcept>
#include <string>

namespace lmphylo {

/// Bad arguments or malformed domain inputs (mismatched gene sets, invalid
/// parameters, ...). Maps to the CLI usage exit class.
class input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Missing secrets or invalid run configuration, detected before any work.
class config_error : public input_error {
public:
    using input_error::input_error;
};

/// Filesystem failures: unreadable, unwritable, missing paths.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structurally invalid file content. Messages carry line/record positions.
class parse_error : public io_error {
public:
    using io_error::io_error;
};

/// A probe that could not be completed after retries. Recorded as a failure
/// count by profile collection rather than aborting a run.
class probe_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical preconditions violated (non-finite features, rank deficiency).
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lmphylo
