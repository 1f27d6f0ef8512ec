#include <iostream>

#include "ssps/cli.hpp"

int main(int argc, char** argv) { return ssps::run_cli(argc, argv, std::cout, std::cerr); }
