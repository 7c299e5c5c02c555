#pragma once

// Experiment orchestration: subcommands, versioned JSON configs, report files
// and bitwise replay.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uml/errors.hpp"
#include "uml/report_json.hpp"

namespace uml::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kOk = 0, kValidationError = 1, kInternalError = 2, kTheoremFailure = 3 };

// Malformed or unknown configuration.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

const std::vector<std::string>& subcommands();

// Defaults for a subcommand, including schema_version.
Json default_config(const std::string& subcommand);

// Overlays user keys on the defaults. Unknown keys, type mismatches and
// unsupported schema versions throw ConfigError.
Json resolve_config(const std::string& subcommand, const Json& user);

struct Outcome {
  Json metrics;
  std::map<std::string, std::string> files;  // name inside outdir -> bytes
  Json input_digests = Json::object();      // input path -> sha256
  bool theorem_failure = false;
  std::string summary;  // human-readable, printed to stdout
};

// Runs a subcommand on a resolved config. Nothing is written to disk.
Outcome execute(const std::string& subcommand, const Json& config, std::uint64_t seed, unsigned workers);

// Entry point with argv-style arguments, program name excluded.
int run(const std::vector<std::string>& args);

}  // namespace uml::cli
