#include <string>
#include <vector>

#include <pipoc/cli.hpp>

int main(int argc, char** argv) {
    return pipoc::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
