#pragma once

namespace lvdfm {

// Entry point of the lvdfm command-line tool. Returns 0 on success, 1 on a
// runtime error and 2 on a usage error.
int cli_main(int argc, char** argv);

}  // namespace lvdfm
