#pragma once

#include <stdexcept>
#include <string>

namespace personaforge {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// gateway
struct BackendUnavailable : Error { using Error::Error; };
struct MalformedResponse : Error { using Error::Error; };
struct EmptyLedger : Error { using Error::Error; };
struct MissingRecording : Error { using Error::Error; };

// persona
struct ExpansionFailed : Error { using Error::Error; };
struct EmptyObservation : Error { using Error::Error; };

// simulate
struct EmptyPool : Error { using Error::Error; };
struct UnparseableVerdict : Error { using Error::Error; };

// corpus
struct TooFewSamples : Error { using Error::Error; };
struct EmptyCorpus : Error { using Error::Error; };
struct SchemaViolation : Error { using Error::Error; };

// optimizer
struct DelimiterCollision : Error { using Error::Error; };
struct MissingSection : Error { using Error::Error; };
struct GroupTooSmall : Error { using Error::Error; };

// reward
struct OutOfRange : Error { using Error::Error; };

// config / io
struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace personaforge
