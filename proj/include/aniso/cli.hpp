#pragma once

// Entry point of the experiment harness. Exit codes: 0 ok, 2 config, 3
// numeric guard, 4 I/O.

namespace aniso::cli {

int run(int argc, char** argv);

}  // namespace aniso::cli
