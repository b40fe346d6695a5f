#include "mars/cli.hpp"

int main(int argc, char** argv) { return mars::cli_main(argc, argv); }
