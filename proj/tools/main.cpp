#include <iostream>
#include <string>
#include <vector>

#include "memrec/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return memrec::cli_dispatch(args, std::cin, std::cout, std::cerr);
}
