#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aggrml {

/// One command-line flag. Every option the CLI accepts is declared here and
/// nowhere else; the help text and the parser are both built from this table.
struct FlagSpec {
  std::string_view name;
  /// Value placeholder, empty for boolean flags.
  std::string_view value;
  std::string_view help;
  /// Comma-separated subcommands that accept the flag.
  std::string_view commands;
};

std::span<const FlagSpec> flag_registry();

/// Names (with leading dashes) of every option the parser accepts, across
/// all subcommands, help excluded.
std::vector<std::string> parser_flag_names();

/// Full top-level help text.
std::string cli_help();

/// Runs the command line `args` (program name excluded). Returns 0 on
/// success, 2 on usage errors and 1 on runtime failures; errors are written
/// to `err` as one line starting with "error: ".
int run_cli(std::span<const std::string> args, std::ostream& out,
            std::ostream& err);

}  // namespace aggrml
