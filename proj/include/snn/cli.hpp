#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace snn::cli {

// Full documented configuration tree with defaults; config files may
// override any subset (unknown keys are rejected), and command-line
// flags override file values.
nlohmann::ordered_json default_config();

// Entry point behind the `snn` binary. Returns the process exit code:
// 0 success, 2 validation error, 3 I/O error, 4 numerical failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace snn::cli
