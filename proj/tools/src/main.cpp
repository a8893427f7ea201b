#include <iostream>

#include "nca_cli/commands.hpp"

int main(int argc, char** argv) { return nca::cli::run(argc, argv, std::cout, std::cerr); }
