#include "adaptkf/cli.hpp"

int main(int argc, char** argv) { return adaptkf::run_cli(argc, argv); }
