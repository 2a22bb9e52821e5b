#include "vulmtl/cli.hpp"

int main(int argc, char** argv) { return vulmtl::run_cli(argc, argv); }
