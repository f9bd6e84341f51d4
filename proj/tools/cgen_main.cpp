#include <iostream>

#include "cgen/cli.hpp"

int main(int argc, char** argv) {
    return cgen::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
