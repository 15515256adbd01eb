#include <iostream>

#include "ebmh/cli.hpp"

int main(int argc, char** argv) { return ebmh::cli::run(argc, argv, std::cout, std::cerr); }
