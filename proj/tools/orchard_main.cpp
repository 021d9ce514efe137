#include <iostream>

#include "orchard/app/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return orchard::app::run_cli(args, std::cout, std::cerr);
}
