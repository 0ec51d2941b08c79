#include "morphgrasp/cli.hpp"

int main(int argc, char** argv) { return morphgrasp::cli_run(argc, argv); }
