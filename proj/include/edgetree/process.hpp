#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace edgetree {

// Private directory removed (recursively) on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "edgetree");
  ~TempDir();
  TempDir(TempDir&& other) noexcept;
  TempDir& operator=(TempDir&& other) noexcept;
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct CommandResult {
  int exit_code = 0;
  std::string output;  // stdout and stderr interleaved
};

// Runs argv[0] (PATH lookup) to completion. Throws ToolchainError when the
// program cannot be started at all.
CommandResult run_command(const std::vector<std::string>& argv);

// Whitespace-separated command template, e.g. "arm-none-eabi-gcc -mthumb".
std::vector<std::string> split_command(std::string_view text);

std::string join_command(const std::vector<std::string>& argv);

}  // namespace edgetree
