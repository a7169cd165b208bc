#include "codeal/cli.hpp"

int main(int argc, char** argv) { return codeal::cli_main(argc, argv); }
