#include <iostream>

#include "miold/cli/app.hpp"

int main(int argc, char** argv) { return miold::cli::run(argc, argv, std::cout, std::cerr); }
