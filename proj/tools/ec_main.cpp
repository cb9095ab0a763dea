#include <string>
#include <vector>

#include "ec/cli.hpp"

int main(int argc, char** argv) {
    return ec::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
