#include <iostream>

#include "gated_price/cli.hpp"

int main(int argc, char** argv) { return gprice::cli::run(argc, argv, std::cout, std::cerr); }
