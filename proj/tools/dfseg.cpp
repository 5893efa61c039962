#include "dfseg/harness.hpp"

#include <iostream>

int main(int argc, char** argv) { return dfseg::harness::run_cli(argc, argv, std::cout, std::cerr); }
