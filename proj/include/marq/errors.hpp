#pragma once

#include <stdexcept>
#include <string>

namespace marq {

// Every failure raised by the library derives from marq::Error so callers can
// catch one type; the subclasses name the failing contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class EmptySourceError : public Error { using Error::Error; };
class OwnershipError : public Error { using Error::Error; };
class UnseenStateError : public Error { using Error::Error; };
class SupportError : public Error { using Error::Error; };
class ActionError : public Error { using Error::Error; };
class LifecycleError : public Error { using Error::Error; };
class CapabilityError : public Error { using Error::Error; };
class LoadError : public Error { using Error::Error; };

}  // namespace marq
