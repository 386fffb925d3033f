#pragma once

#include <stdexcept>
#include <string>

namespace atktag {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define ATKTAG_DEFINE_ERROR(NAME)                                   \
    class NAME : public Error {                                     \
    public:                                                         \
        explicit NAME(const std::string& msg) : Error(msg) {}       \
    }

// Parsing / validation
ATKTAG_DEFINE_ERROR(ParseError);
ATKTAG_DEFINE_ERROR(ValidationError);
ATKTAG_DEFINE_ERROR(UnknownTactic);

// Corpus handling
ATKTAG_DEFINE_ERROR(EmptyCorpus);
ATKTAG_DEFINE_ERROR(InvalidFraction);

// Vectorization
ATKTAG_DEFINE_ERROR(EmptyVocabulary);
ATKTAG_DEFINE_ERROR(NotFitted);

// Linear models
ATKTAG_DEFINE_ERROR(DimensionMismatch);
ATKTAG_DEFINE_ERROR(SingleClass);
ATKTAG_DEFINE_ERROR(NOutOfRange);

// Model container
ATKTAG_DEFINE_ERROR(FormatError);
ATKTAG_DEFINE_ERROR(VersionMismatch);

// Hierarchy
ATKTAG_DEFINE_ERROR(NotTrained);
ATKTAG_DEFINE_ERROR(MissingComponent);

// Metrics
ATKTAG_DEFINE_ERROR(LengthMismatch);
ATKTAG_DEFINE_ERROR(IncompatibleMetric);
ATKTAG_DEFINE_ERROR(EmptyTestSet);

// LLM baseline
ATKTAG_DEFINE_ERROR(EmptySentence);
ATKTAG_DEFINE_ERROR(TransportError);

// CLI
ATKTAG_DEFINE_ERROR(UsageError);

#undef ATKTAG_DEFINE_ERROR

} // namespace atktag
