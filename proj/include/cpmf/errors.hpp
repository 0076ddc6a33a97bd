#pragma once

#include <stdexcept>
#include <string>

namespace cpmf {

// One exception type per contract violation so callers (and tests) can
// distinguish failure modes without parsing messages.
#define CPMF_DEFINE_ERROR(Name)                          \
  struct Name : std::runtime_error {                     \
    explicit Name(const std::string& what)               \
        : std::runtime_error(std::string(#Name ": ") + what) {} \
  }

CPMF_DEFINE_ERROR(IoError);
CPMF_DEFINE_ERROR(Utf8Error);
CPMF_DEFINE_ERROR(MismatchError);
CPMF_DEFINE_ERROR(EmptyCorpusError);
CPMF_DEFINE_ERROR(CoverageError);
CPMF_DEFINE_ERROR(InvalidIdError);
CPMF_DEFINE_ERROR(IdOutOfRangeError);
CPMF_DEFINE_ERROR(SequenceTooLongError);
CPMF_DEFINE_ERROR(ShapeError);
CPMF_DEFINE_ERROR(NonFiniteError);
CPMF_DEFINE_ERROR(InvalidEpsilonError);
CPMF_DEFINE_ERROR(EmptySpanError);
CPMF_DEFINE_ERROR(IndivisibleError);
CPMF_DEFINE_ERROR(ConfigError);
CPMF_DEFINE_ERROR(EmptyFieldError);
CPMF_DEFINE_ERROR(FormatError);

#undef CPMF_DEFINE_ERROR

}  // namespace cpmf
