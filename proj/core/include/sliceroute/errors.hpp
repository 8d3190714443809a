#pragma once

#include <stdexcept>
#include <string>

namespace sliceroute {

// All library failures derive from Error so callers (the CLI in particular)
// can report a diagnostic and exit nonzero without knowing the category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SLICEROUTE_DEFINE_ERROR(Name)   \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

SLICEROUTE_DEFINE_ERROR(DimensionError);
SLICEROUTE_DEFINE_ERROR(ParameterError);
SLICEROUTE_DEFINE_ERROR(DomainError);
SLICEROUTE_DEFINE_ERROR(ContractError);
SLICEROUTE_DEFINE_ERROR(StateError);
SLICEROUTE_DEFINE_ERROR(InputError);
SLICEROUTE_DEFINE_ERROR(IndexError);
SLICEROUTE_DEFINE_ERROR(ConfigError);
SLICEROUTE_DEFINE_ERROR(SplitError);
SLICEROUTE_DEFINE_ERROR(FormatError);
SLICEROUTE_DEFINE_ERROR(TrainingError);

#undef SLICEROUTE_DEFINE_ERROR

}  // namespace sliceroute
