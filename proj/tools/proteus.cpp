#include "proteus/cli.hpp"

int main(int argc, char** argv) { return proteus::cli_main(argc, argv); }
