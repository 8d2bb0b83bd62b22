#include <iostream>

#include "emem/commands.hpp"

int main(int argc, char** argv) { return emem::run_cli(argc, argv, std::cout, std::cerr); }
