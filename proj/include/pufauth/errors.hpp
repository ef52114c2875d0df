#pragma once

#include <stdexcept>
#include <string>

namespace pufauth {

/// Base for every error raised by the library. `kind()` names the failure
/// class so callers (and the CLI) can report it without RTTI tricks.
class Error : public std::runtime_error {
public:
    Error(const char* kind, const std::string& what)
        : std::runtime_error(std::string(kind) + ": " + what), kind_(kind) {}
    const char* kind() const noexcept { return kind_; }

private:
    const char* kind_;
};

#define PUFAUTH_DEFINE_ERROR(Name)                                    \
    class Name : public Error {                                       \
    public:                                                           \
        explicit Name(const std::string& what) : Error(#Name, what) {} \
    }

PUFAUTH_DEFINE_ERROR(PreconditionViolation);
PUFAUTH_DEFINE_ERROR(DegenerateSeed);
PUFAUTH_DEFINE_ERROR(ChallengeWidthMismatch);
PUFAUTH_DEFINE_ERROR(ShapeMismatch);
PUFAUTH_DEFINE_ERROR(LengthMismatch);
PUFAUTH_DEFINE_ERROR(CropOutOfBounds);
PUFAUTH_DEFINE_ERROR(InvalidNormalization);
PUFAUTH_DEFINE_ERROR(EmptyClass);
PUFAUTH_DEFINE_ERROR(TrainingDiverged);
PUFAUTH_DEFINE_ERROR(CalibrationImpossible);
PUFAUTH_DEFINE_ERROR(EvaluationImpossible);
PUFAUTH_DEFINE_ERROR(InvalidTarget);
PUFAUTH_DEFINE_ERROR(RegistryConflict);
PUFAUTH_DEFINE_ERROR(ProtocolError);
PUFAUTH_DEFINE_ERROR(CryptoError);
PUFAUTH_DEFINE_ERROR(ConfigError);
PUFAUTH_DEFINE_ERROR(FormatError);

#undef PUFAUTH_DEFINE_ERROR

inline void require(bool cond, const std::string& what) {
    if (!cond) throw PreconditionViolation(what);
}

}  // namespace pufauth
