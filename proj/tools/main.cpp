#include "unicp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return unicp::cli::run_cli(argc, argv, std::cout, std::cerr);
}
