#include <iostream>

#include "rlff/cli.hpp"

int main(int argc, char** argv)
{
  std::vector<std::string> args(argv + 1, argv + argc);
  return rlff::run_cli(args, std::cout, std::cerr);
}
