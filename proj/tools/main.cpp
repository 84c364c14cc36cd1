#include <iostream>
#include <string>
#include <vector>

#include "implisat/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return implisat::run_cli(args, std::cout, std::cerr);
}
