#include <vector>

#include "literec/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return literec::cli::dispatch(args);
}
