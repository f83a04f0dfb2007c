#pragma once

namespace conceptdrive {

/// Full command-line entry point (gen-data, curate, train, eval, explain,
/// ablate, bench, replay). Returns the process exit code: 0 ok, 2 usage,
/// 3 data/format problem, 4 numeric failure, 1 anything else. Linked into
/// the core library so tests can drive subcommands in-process.
int run_cli(int argc, const char* const* argv);

}  // namespace conceptdrive
