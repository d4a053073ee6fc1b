#include <iostream>

#include "stsrn/cli.hpp"

int main(int argc, char** argv) { return stsrn::run_cli(argc, argv, std::cout, std::cerr); }
