#pragma once

#include <stdexcept>
#include <string>

namespace dflow {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DFLOW_DEFINE_ERROR(Name)                                    \
    class Name : public Error {                                     \
    public:                                                         \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

DFLOW_DEFINE_ERROR(DegenerateScheduler);
DFLOW_DEFINE_ERROR(NumericalUnderflow);
DFLOW_DEFINE_ERROR(NonFiniteState);
DFLOW_DEFINE_ERROR(QuadratureUnresolved);
DFLOW_DEFINE_ERROR(DimensionMismatch);
DFLOW_DEFINE_ERROR(NonFiniteCost);
DFLOW_DEFINE_ERROR(ZeroNorm);
DFLOW_DEFINE_ERROR(InvalidArgument);
DFLOW_DEFINE_ERROR(FileNotFound);
DFLOW_DEFINE_ERROR(BadMatrixFormat);
DFLOW_DEFINE_ERROR(ConfigError);

#undef DFLOW_DEFINE_ERROR

} // namespace dflow
