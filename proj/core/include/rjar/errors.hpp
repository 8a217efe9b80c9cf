#pragma once

#include <stdexcept>
#include <string>

namespace rjar {

// Base of the library's error taxonomy. `code()` is a stable,
// machine-readable identifier; the CLI prints it on stderr and maps
// every library error to exit status 2.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

#define RJAR_DEFINE_ERROR(Name, Code)                              \
    class Name : public Error {                                    \
    public:                                                        \
        explicit Name(const std::string& what) : Error(Code, what) {} \
    }

RJAR_DEFINE_ERROR(SchemaError, "SCHEMA_ERROR");
RJAR_DEFINE_ERROR(ParseError, "PARSE_ERROR");
RJAR_DEFINE_ERROR(DimensionError, "DIMENSION_ERROR");
RJAR_DEFINE_ERROR(DegenerateInstrumentsError, "DEGENERATE_INSTRUMENTS");
RJAR_DEFINE_ERROR(ZeroRankError, "ZERO_RANK");
RJAR_DEFINE_ERROR(DomainError, "DOMAIN_ERROR");
RJAR_DEFINE_ERROR(ResourceError, "RESOURCE_LIMIT");
RJAR_DEFINE_ERROR(DiagonalProjectionError, "DIAGONAL_PROJECTION");
RJAR_DEFINE_ERROR(DegenerateVarianceError, "DEGENERATE_VARIANCE");
RJAR_DEFINE_ERROR(BalancedDesignError, "BALANCED_DESIGN");
RJAR_DEFINE_ERROR(NotApplicableError, "NOT_APPLICABLE");
RJAR_DEFINE_ERROR(DegenerateColumnError, "DEGENERATE_COLUMN");
RJAR_DEFINE_ERROR(DegenerateSignalError, "DEGENERATE_SIGNAL");
RJAR_DEFINE_ERROR(ConfigError, "CONFIG_ERROR");

#undef RJAR_DEFINE_ERROR

} // namespace rjar
