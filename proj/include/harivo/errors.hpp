#pragma once

#include <stdexcept>
#include <string>

namespace harivo {

// Base for every error raised by this library; the CLI maps it to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class DegenerateInputError : public Error { using Error::Error; };
class VocabularyError : public Error { using Error::Error; };
class ClipSpecError : public Error { using Error::Error; };
class IngestionError : public Error { using Error::Error; };
class IntegrityError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ConfigMismatchError : public Error { using Error::Error; };

}  // namespace harivo
