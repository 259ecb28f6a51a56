#include "ioumatch/cli.hpp"

int main(int argc, char** argv) { return ioumatch::run_cli(argc, argv); }
