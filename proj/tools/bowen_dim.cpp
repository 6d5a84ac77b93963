#include <iostream>
#include <string>
#include <vector>

#include "bowen/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return bowen::run_cli(args, std::cout, std::cerr);
}
