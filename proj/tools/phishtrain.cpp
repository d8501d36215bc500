#include <iostream>

#include "phishtrain/cli.hpp"

int main(int argc, char** argv) { return phishtrain::cli::run(argc, argv, std::cout, std::cerr); }
