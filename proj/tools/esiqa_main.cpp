#include "esiqa/cli/cli.hpp"

int main(int argc, char** argv) { return esiqa::cli::run_cli(argc, argv); }
