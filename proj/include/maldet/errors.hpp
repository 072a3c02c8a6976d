#pragma once

#include <stdexcept>
#include <string>

namespace maldet {

// Base class for all recoverable pipeline errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MALDET_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  };

// report ingestion
MALDET_DEFINE_ERROR(MalformedReport)
MALDET_DEFINE_ERROR(EmptyReport)
MALDET_DEFINE_ERROR(ManifestNotFound)
MALDET_DEFINE_ERROR(ManifestSyntax)
MALDET_DEFINE_ERROR(InsufficientClassSamples)

// tokenizer
MALDET_DEFINE_ERROR(CorpusTooSmall)
MALDET_DEFINE_ERROR(UnknownId)

// model
MALDET_DEFINE_ERROR(IdOutOfRange)
MALDET_DEFINE_ERROR(CacheMismatch)

// evaluation
MALDET_DEFINE_ERROR(LengthMismatch)

// synthetic corpus
MALDET_DEFINE_ERROR(InvalidSpec)

// on-disk artifacts (version or structure mismatch)
MALDET_DEFINE_ERROR(FormatError)

#undef MALDET_DEFINE_ERROR

}  // namespace maldet
