#include <iostream>

#include "xmh/cli.hpp"

int main(int argc, char** argv) { return xmh::run_cli(argc, argv, std::cout, std::cerr); }
