#include <string>
#include <vector>

#include "pointcal/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pointcal::run_cli(args);
}
