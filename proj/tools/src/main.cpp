#include <iostream>

#include "spg/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spg::cli::run(args, std::cout, std::cerr);
}
