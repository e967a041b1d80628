#pragma once

#include <stdexcept>
#include <string>

namespace dito {

enum class Errc {
  InvalidArgument,
  DegenerateMoments,
  CountExceedsSupport,
  ResolutionExceeded,
  TruncationTooSmall,
  DimensionMismatch,
  OverlappingIndices,
  NonFiniteState,
  ExplosionGuard,
  NodeBudgetExceeded,
  UnsupportedTestFunction,
  GridMismatch,
  NoiseDominated,
  ConfigError,
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DegenerateMoments: return "DegenerateMoments";
    case Errc::CountExceedsSupport: return "CountExceedsSupport";
    case Errc::ResolutionExceeded: return "ResolutionExceeded";
    case Errc::TruncationTooSmall: return "TruncationTooSmall";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::OverlappingIndices: return "OverlappingIndices";
    case Errc::NonFiniteState: return "NonFiniteState";
    case Errc::ExplosionGuard: return "ExplosionGuard";
    case Errc::NodeBudgetExceeded: return "NodeBudgetExceeded";
    case Errc::UnsupportedTestFunction: return "UnsupportedTestFunction";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::NoiseDominated: return "NoiseDominated";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Single exception type for the library; the code identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace dito
