#pragma once

#include <stdexcept>
#include <string>

namespace arquest {

// Root of every error raised by the library. The concrete type names the
// failure class; api maps them onto HTTP status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ARQUEST_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  };

// Input documents.
ARQUEST_DEFINE_ERROR(ParseError)
ARQUEST_DEFINE_ERROR(ValidationError)
ARQUEST_DEFINE_ERROR(SchemaError)
ARQUEST_DEFINE_ERROR(ConfigError)

// Lookups.
ARQUEST_DEFINE_ERROR(UnknownFactor)
ARQUEST_DEFINE_ERROR(UnknownIndicator)
ARQUEST_DEFINE_ERROR(UnknownMunicipality)
ARQUEST_DEFINE_ERROR(MissingFactor)

// Numerics.
ARQUEST_DEFINE_ERROR(EmptyInput)
ARQUEST_DEFINE_ERROR(LengthMismatch)
ARQUEST_DEFINE_ERROR(DegenerateInput)

// Sessions.
ARQUEST_DEFINE_ERROR(InvalidProfile)
ARQUEST_DEFINE_ERROR(InvalidChoice)
ARQUEST_DEFINE_ERROR(StateError)
ARQUEST_DEFINE_ERROR(OutOfTurn)

// Model gateway and embeddings.
ARQUEST_DEFINE_ERROR(MalformedReply)
ARQUEST_DEFINE_ERROR(EndpointError)
ARQUEST_DEFINE_ERROR(ProviderError)

// Synthetic cohort.
ARQUEST_DEFINE_ERROR(PoolExhausted)

// Persistence.
ARQUEST_DEFINE_ERROR(CorruptLog)

#undef ARQUEST_DEFINE_ERROR

}  // namespace arquest
