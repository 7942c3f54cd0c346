#pragma once

#include <stdexcept>
#include <string>

namespace deforma {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error { public: using Error::Error; };
class ValidationError : public Error { public: using Error::Error; };
class ArgumentError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class LoadError : public Error { public: using Error::Error; };
class DatasetError : public Error { public: using Error::Error; };

// A metric whose denominator vanished for one series (sMAPE/MASE of the reference is zero).
class DegenerateMetric : public Error { public: using Error::Error; };

// Raised when training produces a non-finite loss.
class TrainingError : public Error { public: using Error::Error; };

} // namespace deforma
