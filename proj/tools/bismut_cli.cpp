#include <iostream>
#include <string>
#include <vector>

#include "bismut/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bismut::run(args, std::cout, std::cerr);
}
