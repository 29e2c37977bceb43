#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rdpkit/harness.hpp"
#include "rdpkit/rdp.hpp"

namespace rdpkit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCapReached = 3;

/// Bad flags, config keys or parameter values.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Generator parameters by name, as given on the command line or in [env].
using Params = std::map<std::string, std::string>;

/// grid | chain | parity | mab | file (with `path`).
Rdp build_environment(const std::string& kind, const Params& params);

struct RunConfig {
  std::string env_kind;
  Params env_params;
  ExperimentConfig experiment;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output = "rdpkit-out";
};

/// Reads the INI run configuration. Relative env paths resolve against the
/// config file's directory. Seeds default to RDPKIT_SEED, then 0.
RunConfig load_run_config(const std::filesystem::path& path);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rdpkit::cli
