#pragma once

#include <stdexcept>
#include <string>

namespace pwsp {

/// Broad failure category, used by the CLI to pick an exit code and by
/// callers that want to branch without parsing messages.
enum class ErrorKind {
  Domain,         // coordinates outside the domain, bad extents
  DensitySupport, // density evaluated to a nonpositive value
  DensityContract,// declared bounds violated by an evaluated value
  Parameter,      // invalid numeric parameter (p < 1, lambda <= 0, ...)
  Unsupported,    // operation not defined for this domain kind / dimension
  Capacity,       // exact-mode cap, population explosion
  Index,          // spatial index could not be built
  Grid,           // Eikonal grid contract violated
  Config,         // CLI configuration invalid
  Kind,           // records of mixed quantity kinds
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::DensitySupport: return "density-support";
    case ErrorKind::DensityContract: return "density-contract";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Index: return "index";
    case ErrorKind::Grid: return "grid";
    case ErrorKind::Config: return "config";
    case ErrorKind::Kind: return "kind";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace pwsp
