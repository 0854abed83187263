#pragma once

namespace adaptkf {

// Exit codes: 0 success, 2 config/validation failure, 3 I/O failure,
// 4 numerical abort, 1 anything else.
constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

constexpr const char* kVersionString = "adaptkf 0.1.0";

int run_cli(int argc, const char* const* argv);

}  // namespace adaptkf
