#pragma once

#include <stdexcept>
#include <string>

namespace belt2 {

/// Base class for every error raised by the library. `kind()` names the
/// failure class so callers (and the CLI exit-code mapping) can dispatch
/// without RTTI chains.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define BELT2_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name, what) {}   \
  };

// numcore
BELT2_DEFINE_ERROR(ShapeMismatch)
BELT2_DEFINE_ERROR(NonScalarRoot)
BELT2_DEFINE_ERROR(NonFinite)
// data
BELT2_DEFINE_ERROR(ParseError)
BELT2_DEFINE_ERROR(SchemaError)
BELT2_DEFINE_ERROR(DimMismatch)
BELT2_DEFINE_ERROR(EmptySplit)
BELT2_DEFINE_ERROR(IoError)
// bpe
BELT2_DEFINE_ERROR(EmptyCorpus)
BELT2_DEFINE_ERROR(UnknownId)
// qconformer
BELT2_DEFINE_ERROR(EmptyCodebook)
BELT2_DEFINE_ERROR(UnknownTask)
BELT2_DEFINE_ERROR(DuplicateTask)
// objectives
BELT2_DEFINE_ERROR(NoNegatives)
BELT2_DEFINE_ERROR(InvalidDistribution)
// bridge
BELT2_DEFINE_ERROR(FrozenViolation)
BELT2_DEFINE_ERROR(MissingBest)
BELT2_DEFINE_ERROR(UnknownSample)
// metrics
BELT2_DEFINE_ERROR(LengthMismatch)
// cli / checkpoints
BELT2_DEFINE_ERROR(ConfigError)
BELT2_DEFINE_ERROR(DataError)
BELT2_DEFINE_ERROR(CheckpointMismatch)

#undef BELT2_DEFINE_ERROR

}  // namespace belt2
