#include <iostream>
#include <string>
#include <vector>

#include "odenet/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return odenet::run_cli(args, std::cout, std::cerr);
}
