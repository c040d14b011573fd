#include "drn/cli.hpp"

int main(int argc, char** argv) { return drn::run_cli(argc, argv); }
