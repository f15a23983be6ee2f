#include <iostream>
#include <string>
#include <vector>

#include "mthal/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return mthal::cli_run(args, std::cout, std::cerr);
}
