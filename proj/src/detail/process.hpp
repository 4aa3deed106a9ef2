#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

namespace gsplice::detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (const char ch : s) {
    if (ch == '\'')
      out += "'\\''";
    else
      out += ch;
  }
  return out + "'";
}

/// Runs `<command> '<dir>'` through the shell. Returns the exit code, or -1
/// when the child did not exit normally.
inline int run_with_dir(const std::string& command, const std::filesystem::path& dir) {
  const std::string cmd = command + " " + shell_quote(dir.string());
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

}  // namespace gsplice::detail
