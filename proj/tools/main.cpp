#include "iteq/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return iteq::run_cli(argc, argv, std::cout, std::cerr); }
