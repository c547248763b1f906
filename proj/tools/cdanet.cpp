#include <iostream>
#include <string>
#include <vector>

#include "cdanet/cli/commands.hpp"

int main(int argc, char** argv) {
  return cdanet::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
