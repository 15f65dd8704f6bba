#include <iostream>

#include "scifund/cli.hpp"

int main(int argc, char** argv) { return scifund::run_cli(argc, argv, std::cout, std::cerr); }
