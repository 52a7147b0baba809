#pragma once

#include <stdexcept>
#include <string>

namespace stylerl {

// Base for every failure raised by the library. category() is the short
// diagnostic tag the CLI prints before the message.
class Error : public std::runtime_error {
  public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

  private:
    std::string category_;
};

#define STYLERL_DEFINE_ERROR(Name)                                                                 \
    class Name : public Error {                                                                    \
      public:                                                                                      \
        explicit Name(const std::string& what) : Error(#Name, what) {}                             \
    };

STYLERL_DEFINE_ERROR(ShapeError)
STYLERL_DEFINE_ERROR(NumericsError)
STYLERL_DEFINE_ERROR(DeterminismError)
STYLERL_DEFINE_ERROR(UnknownTokenError)
STYLERL_DEFINE_ERROR(AlignmentError)
STYLERL_DEFINE_ERROR(FormatError)
STYLERL_DEFINE_ERROR(IoError)
STYLERL_DEFINE_ERROR(EmptySentenceError)
STYLERL_DEFINE_ERROR(ConfigError)
STYLERL_DEFINE_ERROR(DataError)
STYLERL_DEFINE_ERROR(LengthError)
STYLERL_DEFINE_ERROR(RangeError)
// Bad command line or unknown configuration key; the CLI exits with 2.
STYLERL_DEFINE_ERROR(UsageError)

#undef STYLERL_DEFINE_ERROR

} // namespace stylerl
