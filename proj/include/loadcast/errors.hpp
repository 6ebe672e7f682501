#pragma once

#include <stdexcept>
#include <string>

namespace loadcast {

/// Root of every error raised by the library. `kind()` is a stable short tag
/// used in machine-readable CLI error summaries.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define LOADCAST_DEFINE_ERROR(Name, tag)                                  \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(tag, what) {}      \
    };

LOADCAST_DEFINE_ERROR(RangeError, "range")
LOADCAST_DEFINE_ERROR(AlignmentError, "alignment")
LOADCAST_DEFINE_ERROR(ConfigError, "config")
LOADCAST_DEFINE_ERROR(ParseError, "parse")
LOADCAST_DEFINE_ERROR(DataQualityError, "data_quality")
LOADCAST_DEFINE_ERROR(OrderingError, "ordering")
LOADCAST_DEFINE_ERROR(DatasetError, "dataset")
LOADCAST_DEFINE_ERROR(ShapeError, "shape")
LOADCAST_DEFINE_ERROR(NumericError, "numeric")
LOADCAST_DEFINE_ERROR(StateError, "state")
LOADCAST_DEFINE_ERROR(TrainingError, "training")
LOADCAST_DEFINE_ERROR(MetricError, "metric")
LOADCAST_DEFINE_ERROR(ReportError, "report")
LOADCAST_DEFINE_ERROR(LeakageError, "leakage")
LOADCAST_DEFINE_ERROR(IoError, "io")

#undef LOADCAST_DEFINE_ERROR

} // namespace loadcast
