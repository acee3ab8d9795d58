#pragma once

#include <stdexcept>
#include <string>

namespace psylab {

// Root of the library's error hierarchy. Module-specific errors derive from
// the per-module bases below so callers can catch at either granularity.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GatewayError : Error {
    using Error::Error;
};
struct ProtocolError : Error {
    using Error::Error;
};
struct QuestionnaireError : Error {
    using Error::Error;
};
struct StatsError : Error {
    using Error::Error;
};
struct TopicsError : Error {
    using Error::Error;
};
struct StoreError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace psylab
