#include "modlab/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return modlab::cli::command_line(argc, argv, std::cout, std::cerr); }
