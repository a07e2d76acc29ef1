#pragma once

// Command-line front end: `deepbsde <train|evaluate|generalize|convergence>
// --config <ini> [--checkpoint <json>] [--out <dir>] [--threads <n>]`.

#include "deepbsde/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace deepbsde {

enum ExitCode : int {
    kExitOk = 0,
    kExitIo = 1,
    kExitConfig = 2,
    kExitCheckpoint = 3,
    kExitDivergence = 4,
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Each command writes resolved_config.ini plus its own outputs into `out`
/// and returns an exit code; failures are described on `log`.
int cmd_train(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
int cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out, std::ostream& log);
int cmd_generalize(const RunConfig& config, const std::filesystem::path& checkpoint,
                   const std::vector<double>& distances, const std::filesystem::path& out, std::ostream& log);
int cmd_convergence(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Full argument handling, argv[0] included.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace deepbsde
