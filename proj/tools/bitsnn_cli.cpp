// Entry point for the bitsnn command-line tool.

#include <iostream>
#include <string>
#include <vector>

#include "bitsnn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bitsnn::cli::run(std::move(args), std::cout, std::cerr);
}
