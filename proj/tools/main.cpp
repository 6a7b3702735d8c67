#include <iostream>

#include "ncssl/cli.hpp"

int main(int argc, char** argv) { return ncssl::cli::main(argc, argv, std::cout, std::cerr); }
