#include <iostream>

#include "lorentz/cli.hpp"

int main(int argc, char** argv) { return lorentz::run_cli(argc, argv, std::cerr); }
