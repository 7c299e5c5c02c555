#include <string>
#include <vector>

#include "uml/cli.hpp"

int main(int argc, char** argv) { return uml::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
