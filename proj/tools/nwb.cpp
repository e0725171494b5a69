#include <iostream>

#include "nwb/cli.hpp"

int main(int argc, char** argv) { return nwb::cli::run(argc, argv, std::cout, std::cerr); }
