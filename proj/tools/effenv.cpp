#include "effenv/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return effenv::run_cli(argc, argv, std::cout, std::cerr);
}
