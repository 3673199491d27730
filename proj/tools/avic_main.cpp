#include "avic/cli.hpp"

int main(int argc, char** argv) { return avic::cli_main(argc, argv); }
