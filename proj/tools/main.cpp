#include "lvdfm/cli.hpp"

int main(int argc, char** argv) { return lvdfm::cli_main(argc, argv); }
