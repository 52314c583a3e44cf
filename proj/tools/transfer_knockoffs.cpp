#include <iostream>

#include "knockoffs/harness.hpp"

int main(int argc, char** argv) { return knockoffs::run_cli(argc, argv, std::cout, std::cerr); }
