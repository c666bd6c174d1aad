#include <iostream>

#include "soilpq/cli.hpp"

int main(int argc, char** argv) { return soilpq::cli::run(argc, argv, std::cout, std::cerr); }
