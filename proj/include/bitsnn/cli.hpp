#pragma once
// Command-line surface binding the modules together: train runs the full
// adaptive-bit loop and writes a checkpoint plus logs, eval scores a
// checkpoint, verify-theory runs the Monte Carlo claim suite, and report
// prints the cost row of a checkpoint. Every command writes a run.json
// provenance record (command, config hash, seed, versions) into the output
// directory, which defaults to $BITSNN_OUTPUT_DIR or ./runs.
//
// Exit codes: 0 success, 1 validation failure (bad flags or config), 2
// runtime failure (missing files, corrupt data, divergence).

#include <iosfwd>
#include <string>
#include <vector>

namespace bitsnn::cli {

inline constexpr const char* kVersion = "1.0.0";

// args holds everything after the program name.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace bitsnn::cli
