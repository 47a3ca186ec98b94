#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace gapkit::cli {

inline constexpr const char* kToolName = "gapkit";
inline constexpr const char* kToolVersion = "0.1.0";

enum ExitStatus : int { kSuccess = 0, kFailure = 1, kInconclusive = 2 };

/// What a command produced. `status` is kSuccess or kInconclusive.
struct CommandOutput {
  nlohmann::json result = nlohmann::json::object();
  nlohmann::json tolerances = nlohmann::json::object();
  int status = kSuccess;
  std::vector<std::string> csv_header;
  std::vector<std::vector<nlohmann::json>> csv_rows;
};

/// Space-separated command paths, e.g. "gap measure".
const std::vector<std::string>& command_names();

/// Dispatches one command. `jobs` bounds parallelism and never changes the output.
/// Throws SchemaError for malformed parameters.
CommandOutput execute(const std::string& command, const nlohmann::json& params, std::uint64_t seed,
                      unsigned jobs);

/// The report envelope: tool, version, config (command, seed, params), tolerances, result.
nlohmann::json make_report(const std::string& command, const nlohmann::json& params, std::uint64_t seed,
                           const CommandOutput& output);

/// Serialized report; identical inputs give identical bytes.
std::string render_report(const nlohmann::json& report);
std::string render_csv(const CommandOutput& output);

/// Full command-line entry point. Returns the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gapkit::cli
