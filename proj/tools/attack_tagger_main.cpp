#include <string>
#include <vector>

#include "atktag/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return atktag::cli_main(args);
}
