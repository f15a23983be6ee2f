#pragma once
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mthal {

/// Exit statuses of the command-line driver.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// key=value lines; '#' starts a comment, blank lines are skipped.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Runs `mthal <command> [options]` with args[0] the program name. Values
/// from `--config FILE` act as defaults that explicit flags override.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mthal
