#include <iostream>
#include <string>
#include <vector>

#include "revgraph/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return revgraph::run_cli(args, std::cout, std::cerr);
}
