#include "lact/cli.hpp"

int main(int argc, char** argv) { return lact::cli::cli_main(argc, argv); }
