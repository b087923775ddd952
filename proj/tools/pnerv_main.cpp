#include "pnerv/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return pnerv::run_cli(argc, argv, std::cout, std::cerr); }
