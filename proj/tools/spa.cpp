#include <iostream>
#include <string>
#include <vector>

#include "spa/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spa::run_cli(args, std::cout, std::cerr);
}
