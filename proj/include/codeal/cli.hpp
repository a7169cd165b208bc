#pragma once

namespace codeal {

// Entry point shared by the codeal binary and the end-to-end tests.
// Returns a process exit code: 0 success, 2 usage error, 3 data error,
// 4 numeric failure.
int cli_main(int argc, char** argv);

}  // namespace codeal
