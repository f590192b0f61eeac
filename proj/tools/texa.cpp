#include <iostream>

#include "texa/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return texa::cli::run(args, std::cout, std::cerr);
}
