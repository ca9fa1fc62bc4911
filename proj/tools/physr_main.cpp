#include <iostream>

#include "physr/cli.hpp"

int main(int argc, char** argv) { return physr::cli::dispatch(argc, argv, std::cout, std::cerr); }
