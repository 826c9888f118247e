#ifndef AERO_CLI_HPP
#define AERO_CLI_HPP

#include <string>

namespace aero
{

    struct CliOptions
    {
        std::string command;
        std::string config_path;
        std::string out_dir = "out";
        long long seed = -1; // >= 0 overrides the config seed
    };

    // Dispatches one subcommand. Failures are written to <out>/error.json and
    // mapped to a nonzero exit code.
    int runCommand(const CliOptions &opt);

} // namespace aero

#endif
