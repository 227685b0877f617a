#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace scd::cli {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

struct Options {
  std::string command;  // train | ab-compare | shapes | gradcheck | report
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> preset;  // table1 | desk
  std::optional<std::string> checkpoint;
};

// Dispatches a command. Validation problems (bad config, bad flags) exit
// 1; failed numerical checks (gradcheck, A/B comparison) exit 2.
int run(const Options& opts, std::ostream& out, std::ostream& err);

}  // namespace scd::cli
