#include <iostream>

#include "sawspe/cli.hpp"

int main(int argc, char** argv) { return sawspe::cli::run(argc, argv, std::cout, std::cerr); }
