#include <vector>

#include "stenonet/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return stenonet::run_cli(args);
}
