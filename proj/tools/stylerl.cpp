#include <iostream>
#include <string>
#include <vector>

#include "stylerl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return stylerl::cli_main(args, std::cin, std::cout, std::cerr);
}
