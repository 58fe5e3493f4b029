#include <iostream>

#include "mlvae/commands.hpp"

int main(int argc, char** argv) { return mlvae::run_cli(argc, argv, std::cout, std::cerr); }
