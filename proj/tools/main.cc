#include <iostream>
#include <string>
#include <vector>

#include "spatialrel/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spatialrel::run_cli(args, std::cout, std::cerr);
}
